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

#ifndef FDPO_PIPELINE_H_
#define FDPO_PIPELINE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "fdpo/dpo_core.h"
#include "fdpo/endpoint.h"
#include "fdpo/eval_stats.h"
#include "fdpo/news_client.h"
#include "fdpo/question_store.h"
#include "fdpo/reranker.h"
#include "fdpo/selfplay.h"

namespace fdpo {

// How a stage talks to a remote service.
//   http   - live calls; the API key is read from `api_key_env`.
//   replay - answers come only from recorded transcripts (offline).
//   record - live calls, each response saved to `transcripts`.
struct EndpointConfig {
  std::string mode = "replay";
  std::string base_url;
  std::string path;  // empty: the client's default
  std::string api_key_env;
  std::string key_header;  // news only
  std::filesystem::path transcripts;
  int timeout_seconds = 120;
};

struct ModelSpec {
  std::string tag;
  std::string kind = "chat";  // "chat" or "toy"
  std::string model;          // chat model name
  std::optional<PromptStyle> style;
  std::filesystem::path policy;  // toy policy file
};

struct PipelineConfig {
  std::filesystem::path work_dir = "work";
  std::filesystem::path questions;
  std::string questions_format = "jsonl";  // or "csv"
  CsvColumnMapping csv_columns;
  Partition partition = Partition::Default();

  EndpointConfig chat;
  EndpointConfig news;
  NewsOptions news_options;

  std::string selfplay_model;
  std::optional<PromptStyle> selfplay_style;
  int selfplay_max_retries = 4;
  double temperature = 1.0;
  std::optional<int> max_tokens;

  std::vector<ModelSpec> forecast_models;
  DpoConfig dpo;
  LabelMode label_mode = LabelMode::kTrueOutcome;
  std::uint64_t seed = 0;
  std::size_t concurrency = 8;
  RetryPolicy retry;
  std::size_t featurizer_dims = 512;

  PromptStyle SelfplayStyle() const;
  const ModelSpec* FindModel(const std::string& tag) const;

  // Relative paths resolve against the config file's directory. Throws
  // ConfigError for malformed or inconsistent settings.
  static PipelineConfig Load(const std::filesystem::path& path);
  static PipelineConfig FromJson(const Json& j,
                                 const std::filesystem::path& base_dir);
  Json ToJson() const;
  void Validate() const;
};

// Fixed artifact names inside the work directory.
struct ArtifactPaths {
  std::filesystem::path root;

  std::filesystem::path store() const { return root / "store.jsonl"; }
  std::filesystem::path rejections() const {
    return root / "ingest_rejections.jsonl";
  }
  std::filesystem::path news() const { return root / "news.jsonl"; }
  std::filesystem::path traces() const { return root / "traces.jsonl"; }
  std::filesystem::path prompts() const { return root / "prompts.jsonl"; }
  std::filesystem::path selfplay_status() const {
    return root / "selfplay_status.jsonl";
  }
  std::filesystem::path pairs(const std::string& name) const {
    return root / ("pairs_" + name + ".jsonl");
  }
  std::filesystem::path dataset(const std::string& name) const {
    return root / ("dpo_" + name + ".jsonl");
  }
  std::filesystem::path policy(const std::string& name) const {
    return root / ("policy_" + name + ".json");
  }
  std::filesystem::path training_report(const std::string& name) const {
    return root / ("training_" + name + ".jsonl");
  }
  std::filesystem::path forecasts(const std::string& tag) const {
    return root / "forecasts" / (tag + ".jsonl");
  }
  std::filesystem::path report_dir() const { return root / "report"; }
};

// Counts and hashes reported by a stage; also written as the stage manifest.
struct StageSummary {
  std::string stage;
  Json counts = Json::object();
};

// Writes "<artifact>.manifest.json" with `counts` and the artifact's SHA-256.
void WriteManifest(const std::filesystem::path& artifact, Json counts);

// Orchestrates the stages. Every stage reads its inputs from the work
// directory, skips question ids it has already processed, and rewrites its
// outputs canonically so unchanged inputs give byte-identical files.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  // Test and generator hooks: bypass endpoint construction from config.
  void SetChatEndpoint(ChatEndpoint* chat) { chat_override_ = chat; }
  void SetNewsEndpoint(NewsEndpoint* news) { news_override_ = news; }

  const PipelineConfig& config() const { return config_; }
  const ArtifactPaths& paths() const { return paths_; }

  StageSummary Ingest();
  StageSummary FetchNews();
  StageSummary SelfPlay();
  StageSummary Rank(std::optional<LabelMode> mode = std::nullopt,
                    std::optional<std::uint64_t> seed = std::nullopt,
                    std::string name = "");
  StageSummary EmitDpo(const std::string& name);
  StageSummary TrainToy(const std::string& name,
                        std::optional<std::uint64_t> seed = std::nullopt);
  StageSummary Forecast(const std::string& tag);
  StageSummary Evaluate(const std::vector<std::string>& tags,
                        VarianceMode mode = VarianceMode::kWelch);

  // Rendered prompt for a question as used by selfplay and toy forecasts.
  std::string PromptFor(const Question& q, PromptStyle style) const;

 private:
  ChatEndpoint& Chat();
  NewsEndpoint& News();
  QuestionStore LoadStore() const;
  // Cached after the first call; safe to call from worker threads.
  const std::map<std::string, NewsContext>& LoadNews() const;

  PipelineConfig config_;
  ArtifactPaths paths_;
  ChatEndpoint* chat_override_ = nullptr;
  NewsEndpoint* news_override_ = nullptr;
  std::unique_ptr<ChatEndpoint> chat_;
  std::unique_ptr<NewsEndpoint> news_;
  mutable std::mutex news_mu_;
  mutable std::optional<std::map<std::string, NewsContext>> news_cache_;
  ConcurrencyLimiter limiter_;
};

// Builds the configured endpoint. For http/record modes the API key variable
// must be set (ConfigError("missing_api_key") otherwise); nothing is sent.
std::unique_ptr<ChatEndpoint> MakeChatEndpoint(const EndpointConfig& config);
std::unique_ptr<NewsEndpoint> MakeNewsEndpoint(const EndpointConfig& config);

}  // namespace fdpo

#endif  // FDPO_PIPELINE_H_
