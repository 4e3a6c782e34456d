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

#include "fdpo/reranker.h"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "fdpo/error.h"
#include "fdpo/forecast_parser.h"
#include "fdpo/random.h"

namespace fdpo {

const char* ToString(LabelMode mode) {
  return mode == LabelMode::kTrueOutcome ? "true_outcome" : "randomized";
}

LabelMode LabelModeFromString(std::string_view s) {
  if (s == "true_outcome") return LabelMode::kTrueOutcome;
  if (s == "randomized") return LabelMode::kRandomized;
  throw ConfigError("invalid_label_mode", std::string(s));
}

RankedPair RankPair(double p1, double p2, int outcome) {
  if (SameForecast(p1, p2)) {
    throw Error("tie_pair", FormatProbability(p1) + " vs " + FormatProbability(p2));
  }
  const double r1 = RankingDistance(p1, outcome);
  const double r2 = RankingDistance(p2, outcome);
  // p1 != p2 and o is 0 or 1, so r1 != r2.
  if (r1 < r2) return RankedPair{0, 1, r1, r2};
  return RankedPair{1, 0, r2, r1};
}

bool RandomizedOrientation(std::uint64_t seed, std::string_view question_id) {
  return (SplitMix64(SplitMix64(seed) ^ Fnv1a64(question_id)) >> 63) != 0;
}

Json PreferencePair::ToJson() const {
  return Json{{"question_id", question_id},
              {"chosen", chosen.ToJson()},
              {"rejected", rejected.ToJson()},
              {"outcome", outcome},
              {"r_chosen", r_chosen},
              {"r_rejected", r_rejected},
              {"label_mode", ToString(label_mode)}};
}

PreferencePair PreferencePair::FromJson(const Json& j) {
  PreferencePair p;
  p.question_id = RequireString(j, "question_id");
  p.chosen = ReasoningTrace::FromJson(j.at("chosen"));
  p.rejected = ReasoningTrace::FromJson(j.at("rejected"));
  p.outcome = static_cast<int>(RequireNumber(j, "outcome"));
  p.r_chosen = RequireNumber(j, "r_chosen");
  p.r_rejected = RequireNumber(j, "r_rejected");
  p.label_mode = LabelModeFromString(RequireString(j, "label_mode"));
  return p;
}

BuildPairsResult BuildPairs(std::span<const ReasoningTrace> traces,
                            const QuestionStore& outcomes, LabelMode mode,
                            std::uint64_t seed) {
  std::map<std::string, std::vector<const ReasoningTrace*>> by_question;
  for (const auto& t : traces) by_question[t.question_id].push_back(&t);

  BuildPairsResult result;
  for (auto& [id, group] : by_question) {
    if (group.size() != 2) {
      spdlog::warn("{}: {} traces, expected 2; skipped", id, group.size());
      result.skipped.emplace_back(id, "wrong_trace_count");
      continue;
    }
    const Question* q = outcomes.Find(id);
    if (!q) {
      spdlog::warn("{}: no resolved outcome; skipped", id);
      result.skipped.emplace_back(id, "missing_outcome");
      continue;
    }
    // Canonical input order so the result never depends on trace order.
    std::sort(group.begin(), group.end(), [](auto* a, auto* b) {
      if (a->attempt_index != b->attempt_index) {
        return a->attempt_index < b->attempt_index;
      }
      return a->raw_text < b->raw_text;
    });
    const ReasoningTrace& t1 = *group[0];
    const ReasoningTrace& t2 = *group[1];
    if (SameForecast(t1.probability, t2.probability)) {
      spdlog::warn("{}: identical forecasts; skipped", id);
      result.skipped.emplace_back(id, "tie_pair");
      continue;
    }
    const RankedPair ranked = RankPair(t1.probability, t2.probability, q->outcome);
    std::size_t chosen = ranked.chosen_index;
    if (mode == LabelMode::kRandomized) {
      chosen = RandomizedOrientation(seed, id) ? 0 : 1;
    }
    const ReasoningTrace& c = chosen == 0 ? t1 : t2;
    const ReasoningTrace& r = chosen == 0 ? t2 : t1;
    result.pairs.push_back(PreferencePair{
        .question_id = id,
        .chosen = c,
        .rejected = r,
        .outcome = q->outcome,
        .r_chosen = RankingDistance(c.probability, q->outcome),
        .r_rejected = RankingDistance(r.probability, q->outcome),
        .label_mode = mode});
  }
  return result;
}

Json DpoExample::ToJson() const {
  return Json{{"prompt", prompt},
              {"chosen", chosen},
              {"rejected", rejected},
              {"metadata",
               {{"question_id", question_id},
                {"label_mode", ToString(label_mode)},
                {"r_chosen", r_chosen},
                {"r_rejected", r_rejected}}}};
}

DpoExample DpoExample::FromJson(const Json& j) {
  DpoExample e;
  e.prompt = RequireString(j, "prompt");
  e.chosen = RequireString(j, "chosen");
  e.rejected = RequireString(j, "rejected");
  const Json& meta = j.at("metadata");
  e.question_id = RequireString(meta, "question_id");
  e.label_mode = LabelModeFromString(RequireString(meta, "label_mode"));
  e.r_chosen = RequireNumber(meta, "r_chosen");
  e.r_rejected = RequireNumber(meta, "r_rejected");
  return e;
}

std::vector<DpoExample> MakeExamples(
    std::span<const PreferencePair> pairs,
    const std::map<std::string, std::string>& prompts) {
  std::vector<DpoExample> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto it = prompts.find(p.question_id);
    if (it == prompts.end()) throw Error("missing_prompt", p.question_id);
    out.push_back(DpoExample{.prompt = it->second,
                             .chosen = p.chosen.raw_text,
                             .rejected = p.rejected.raw_text,
                             .question_id = p.question_id,
                             .label_mode = p.label_mode,
                             .r_chosen = p.r_chosen,
                             .r_rejected = p.r_rejected});
  }
  return out;
}

Json DatasetManifest::ToJson() const {
  return Json{{"count", count},
              {"label_mode", ToString(label_mode)},
              {"seed", seed},
              {"content_hash", content_hash}};
}

DatasetManifest DatasetManifest::FromJson(const Json& j) {
  DatasetManifest m;
  m.count = j.at("count").get<std::size_t>();
  m.label_mode = LabelModeFromString(RequireString(j, "label_mode"));
  m.seed = j.at("seed").get<std::uint64_t>();
  m.content_hash = RequireString(j, "content_hash");
  return m;
}

std::filesystem::path ManifestPath(const std::filesystem::path& dataset) {
  std::filesystem::path p = dataset;
  p += ".manifest.json";
  return p;
}

DatasetManifest EmitDataset(std::vector<DpoExample> examples,
                            const std::filesystem::path& path,
                            std::uint64_t seed) {
  if (examples.empty()) throw Error("empty_dataset", path.string());
  std::stable_sort(examples.begin(), examples.end(),
                   [](const DpoExample& a, const DpoExample& b) {
                     return a.question_id < b.question_id;
                   });
  std::string contents;
  for (const auto& e : examples) {
    contents += CanonicalDump(e.ToJson());
    contents += '\n';
  }
  DatasetManifest manifest{.count = examples.size(),
                           .label_mode = examples.front().label_mode,
                           .seed = seed,
                           .content_hash = Sha256Hex(contents)};
  WriteFileAtomic(path, contents);
  try {
    WriteFileAtomic(ManifestPath(path), manifest.ToJson().dump(2) + "\n");
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(path, ec);
    throw;
  }
  return manifest;
}

std::vector<DpoExample> LoadDataset(const std::filesystem::path& path) {
  const std::string contents = ReadFile(path);
  std::vector<DpoExample> out;
  for (const auto& record : ReadJsonLines(path)) {
    out.push_back(DpoExample::FromJson(record));
  }
  const auto manifest_path = ManifestPath(path);
  if (std::filesystem::exists(manifest_path)) {
    const auto manifest =
        DatasetManifest::FromJson(Json::parse(ReadFile(manifest_path)));
    if (manifest.count != out.size()) {
      throw Error("manifest_mismatch",
                  "manifest count " + std::to_string(manifest.count) +
                      " but " + std::to_string(out.size()) + " records");
    }
    if (manifest.content_hash != Sha256Hex(contents)) {
      throw Error("manifest_mismatch", "content hash differs");
    }
  }
  return out;
}

}  // namespace fdpo
