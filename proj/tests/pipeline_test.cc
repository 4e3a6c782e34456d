/*
 * Copyright 2026 The fdpo Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <set>
#include <stdexcept>

#include "fdpo/forecast_parser.h"
#include "fdpo/pipeline.h"
#include "test_support.h"

namespace fdpo {
namespace {

namespace fs = std::filesystem;

const fs::path kCorpus = fs::path(FDPO_SOURCE_DIR) / "data" / "synthetic";

// A private copy of the bundled corpus with its own work directory.
struct Workspace {
  testing::TempDir dir;
  PipelineConfig config;

  Workspace() {
    fs::copy(kCorpus, dir.path(), fs::copy_options::recursive);
    config = PipelineConfig::Load(dir / "config.json");
  }
  fs::path work() const { return config.work_dir; }
};

// Data artifacts by name; manifests are excluded because they carry
// per-invocation counts such as "generated_now".
std::map<std::string, std::string> Snapshot(const fs::path& work) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(work)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), work).string();
    if (rel.ends_with(".manifest.json")) continue;
    out[rel] = ReadFile(e.path());
  }
  return out;
}

void RunAll(Pipeline& p) {
  p.Ingest();
  p.FetchNews();
  p.SelfPlay();
  p.Rank(LabelMode::kTrueOutcome);
  p.Rank(LabelMode::kRandomized);
  p.EmitDpo("true_outcome");
  p.EmitDpo("randomized");
  p.TrainToy("true_outcome");
  p.TrainToy("randomized");
  for (const auto& m : p.config().forecast_models) p.Forecast(m.tag);
  p.Evaluate({});
}

TEST(PipelineTest, SyntheticRunSatisfiesCountingInvariants) {
  Workspace ws;
  Pipeline p(ws.config);
  const auto ingest = p.Ingest().counts;
  EXPECT_EQ(ingest["accepted"], 200);
  EXPECT_EQ(ingest["rejected"], 3);
  p.FetchNews();
  const auto sp = p.SelfPlay().counts;
  const int kept = sp["kept"], dropped = sp["dropped"], failed = sp["failed"];
  EXPECT_EQ(sp["traces"], 2 * kept);
  EXPECT_EQ(kept + dropped + failed, sp["train_questions"].get<int>());
  EXPECT_GT(kept, 100);
  EXPECT_GT(dropped, 0);
  EXPECT_EQ(ReadJsonLines(p.paths().traces()).size(), static_cast<std::size_t>(2 * kept));
  EXPECT_EQ(ReadJsonLines(p.paths().prompts()).size(), static_cast<std::size_t>(kept));

  const auto rank = p.Rank(LabelMode::kTrueOutcome).counts;
  EXPECT_EQ(rank["pairs"], kept);
  for (const auto& j : ReadJsonLines(p.paths().pairs("true_outcome"))) {
    const auto pair = PreferencePair::FromJson(j);
    EXPECT_FALSE(SameForecast(pair.chosen.probability, pair.rejected.probability));
    EXPECT_LT(pair.r_chosen, pair.r_rejected);
  }
  const auto emitted = p.EmitDpo("true_outcome").counts;
  EXPECT_EQ(emitted["count"], kept);
  const auto examples = LoadDataset(p.paths().dataset("true_outcome"));
  const auto prompts = ReadJsonLines(p.paths().prompts());
  std::set<std::string> prompt_texts;
  for (const auto& j : prompts) prompt_texts.insert(j["prompt"].get<std::string>());
  for (const auto& e : examples) EXPECT_TRUE(prompt_texts.count(e.prompt)) << e.question_id;

  const auto train = p.TrainToy("true_outcome").counts;
  EXPECT_EQ(train["epochs"], 5);
  EXPECT_TRUE(fs::exists(p.paths().policy("true_outcome")));
  EXPECT_TRUE(fs::exists(p.paths().policy("init")));
}

TEST(PipelineTest, RerunIsIdempotent) {
  Workspace ws;
  Pipeline first(ws.config);
  RunAll(first);
  const auto before = Snapshot(ws.work());
  Pipeline second(ws.config);
  RunAll(second);
  EXPECT_EQ(Snapshot(ws.work()), before);
  EXPECT_EQ(second.SelfPlay().counts["generated_now"], 0);
  for (const char* artifact : {"report/report.jsonl", "dpo_randomized.jsonl",
                               "forecasts/fine_tune.jsonl", "policy_true_outcome.json"}) {
    EXPECT_TRUE(before.count(artifact)) << artifact;
  }
}

// Delegates to a real endpoint and dies hard after `limit` calls.
class CrashingChat : public ChatEndpoint {
 public:
  CrashingChat(ChatEndpoint& inner, int limit) : inner_(inner), remaining_(limit) {}
  ChatResponse Complete(const ChatRequest& request) override {
    if (remaining_.fetch_sub(1) <= 0) throw std::runtime_error("process killed");
    return inner_.Complete(request);
  }

 private:
  ChatEndpoint& inner_;
  std::atomic<int> remaining_;
};

TEST(PipelineTest, InterruptedSelfplayResumesToTheSameArtifacts) {
  Workspace clean;
  Pipeline reference(clean.config);
  reference.Ingest();
  reference.FetchNews();
  reference.SelfPlay();
  reference.Rank();
  reference.EmitDpo("true_outcome");
  const auto expected = Snapshot(clean.work());

  Workspace ws;
  {
    Pipeline p(ws.config);
    p.Ingest();
    p.FetchNews();
    auto replay = MakeChatEndpoint(ws.config.chat);
    CrashingChat crashing(*replay, 120);
    p.SetChatEndpoint(&crashing);
    EXPECT_THROW(p.SelfPlay(), std::runtime_error);
  }
  EXPECT_FALSE(ReadJsonLines(ws.work() / "selfplay_status.jsonl").empty());
  Pipeline resumed(ws.config);
  const auto counts = resumed.SelfPlay().counts;
  EXPECT_LT(counts["generated_now"].get<int>(), counts["train_questions"].get<int>());
  resumed.Rank();
  resumed.EmitDpo("true_outcome");
  EXPECT_EQ(Snapshot(ws.work()), expected);
}

TEST(PipelineTest, RankIsDeterministicPerSeed) {
  Workspace ws;
  Pipeline p(ws.config);
  p.Ingest();
  p.FetchNews();
  p.SelfPlay();
  const auto a = p.Rank(LabelMode::kRandomized, 5, "a").counts;
  const auto b = p.Rank(LabelMode::kRandomized, 5, "b").counts;
  const auto c = p.Rank(LabelMode::kRandomized, 6, "c").counts;
  EXPECT_EQ(a["content_hash"], b["content_hash"]);
  EXPECT_NE(a["content_hash"], c["content_hash"]);
  EXPECT_EQ(a["pairs"], c["pairs"]);
  p.EmitDpo("a");
  const auto manifest = DatasetManifest::FromJson(
      Json::parse(ReadFile(ManifestPath(p.paths().dataset("a")))));
  EXPECT_EQ(manifest.seed, 5u);
  EXPECT_EQ(manifest.label_mode, LabelMode::kRandomized);
}

TEST(PipelineTest, MissingArtifactsAreReported) {
  Workspace ws;
  Pipeline p(ws.config);
  for (auto stage : {+[](Pipeline& x) { x.Rank(); }, +[](Pipeline& x) { x.SelfPlay(); },
                     +[](Pipeline& x) { x.EmitDpo("true_outcome"); }}) {
    try {
      stage(p);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), "missing_artifact");
    }
  }
  EXPECT_THROW(p.TrainToy("true_outcome"), Error);
}

TEST(PipelineTest, UnknownForecastTagIsAConfigError) {
  Workspace ws;
  Pipeline p(ws.config);
  EXPECT_THROW(p.Forecast("nope"), ConfigError);
}

std::string ConfigErrorCode(const Json& j) {
  try {
    PipelineConfig::FromJson(j, "/tmp").Validate();
  } catch (const ConfigError& e) {
    return e.code();
  }
  return "";
}

TEST(PipelineConfigTest, RejectsInvalidSettings) {
  const Json good = Json::parse(ReadFile(kCorpus / "config.json"));
  EXPECT_EQ(ConfigErrorCode(good), "");
  auto with = [&](const std::string& pointer, Json value) {
    Json j = good;
    j[Json::json_pointer(pointer)] = std::move(value);
    return ConfigErrorCode(j);
  };
  EXPECT_EQ(with("/chat/mode", "carrier_pigeon"), "invalid_endpoint_mode");
  EXPECT_EQ(with("/concurrency", 0), "invalid_concurrency");
  EXPECT_EQ(with("/forecast_models/1/tag", "fine_tune"), "duplicate_model_tag");
  EXPECT_EQ(with("/forecast_models/1/tag", "../x"), "invalid_model_tag");
  EXPECT_EQ(with("/forecast_models/3/kind", "oracle"), "invalid_model");
  EXPECT_EQ(with("/dpo/beta", 0), "invalid_dpo_config");
  EXPECT_EQ(with("/label_mode", "upside_down"), "invalid_label_mode");
  EXPECT_EQ(with("/retry/max_attempts", 0), "invalid_retry");
  EXPECT_EQ(with("/concurrency", "four"), "malformed_config");
  Json no_transcripts = good;
  no_transcripts["news"].erase("transcripts");
  EXPECT_EQ(ConfigErrorCode(no_transcripts), "missing_transcripts");
}

TEST(PipelineConfigTest, LoadErrors) {
  testing::TempDir dir;
  try {
    PipelineConfig::Load(dir / "absent.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.code(), "missing_config");
  }
  WriteFileAtomic(dir / "bad.json", "{ not json");
  try {
    PipelineConfig::Load(dir / "bad.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.code(), "malformed_config");
  }
}

TEST(PipelineConfigTest, RoundTripAndRelativePaths) {
  const auto config = PipelineConfig::Load(kCorpus / "config.json");
  EXPECT_EQ(config.work_dir, kCorpus / "work");
  EXPECT_EQ(config.chat.transcripts, kCorpus / "transcripts" / "chat");
  const auto again = PipelineConfig::FromJson(config.ToJson(), "/elsewhere");
  EXPECT_EQ(again.ToJson(), config.ToJson());
}

TEST(PipelineConfigTest, MissingApiKeyFailsBeforeAnyWork) {
  ::unsetenv("FDPO_TEST_ABSENT_KEY");
  Json j = Json::parse(ReadFile(kCorpus / "config.json"));
  j["chat"] = {{"mode", "http"},
               {"base_url", "http://127.0.0.1:9"},
               {"api_key_env", "FDPO_TEST_ABSENT_KEY"}};
  testing::TempDir dir;
  auto config = PipelineConfig::FromJson(j, dir.path());
  Pipeline p(config);
  for (auto stage : {+[](Pipeline& x) { x.SelfPlay(); }, +[](Pipeline& x) { x.FetchNews(); },
                     +[](Pipeline& x) { x.Forecast("simulated"); }}) {
    try {
      stage(p);
      FAIL();
    } catch (const ConfigError& e) {
      EXPECT_EQ(e.code(), "missing_api_key");
    }
  }
  EXPECT_FALSE(fs::exists(dir / "work" / "traces.jsonl"));
}

}  // namespace
}  // namespace fdpo
