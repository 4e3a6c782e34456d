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

#include "fdpo/pipeline.h"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>

#include <spdlog/spdlog.h>

#include "fdpo/error.h"
#include "fdpo/forecast_parser.h"

namespace fdpo {
namespace {

namespace fs = std::filesystem;

fs::path Resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute()) return p;
  return (base / p).lexically_normal();
}

template <typename T>
T Get(const Json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<T>();
}

EndpointConfig EndpointFromJson(const Json& j, const fs::path& base) {
  EndpointConfig c;
  c.mode = Get<std::string>(j, "mode", c.mode);
  c.base_url = Get<std::string>(j, "base_url", "");
  c.path = Get<std::string>(j, "path", "");
  c.api_key_env = Get<std::string>(j, "api_key_env", "");
  c.key_header = Get<std::string>(j, "key_header", "");
  c.transcripts = Resolve(base, Get<std::string>(j, "transcripts", ""));
  c.timeout_seconds = Get<int>(j, "timeout_seconds", c.timeout_seconds);
  return c;
}

Json EndpointToJson(const EndpointConfig& c) {
  return Json{{"mode", c.mode},
              {"base_url", c.base_url},
              {"path", c.path},
              {"api_key_env", c.api_key_env},
              {"key_header", c.key_header},
              {"transcripts", c.transcripts.string()},
              {"timeout_seconds", c.timeout_seconds}};
}

void ValidateEndpoint(const EndpointConfig& c, const char* which) {
  if (c.mode != "http" && c.mode != "replay" && c.mode != "record") {
    throw ConfigError("invalid_endpoint_mode", std::string(which) + ": " + c.mode);
  }
  if (c.mode != "http" && c.transcripts.empty()) {
    throw ConfigError("missing_transcripts",
                      std::string(which) + " endpoint in " + c.mode + " mode");
  }
}

std::string RequireApiKey(const EndpointConfig& c) {
  if (c.api_key_env.empty()) return {};
  const char* key = std::getenv(c.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw ConfigError("missing_api_key",
                      "environment variable " + c.api_key_env + " is not set");
  }
  return key;
}

// A recording endpoint that owns the live endpoint it wraps.
class OwningRecordingChat : public ChatEndpoint {
 public:
  OwningRecordingChat(std::unique_ptr<ChatEndpoint> inner,
                      std::shared_ptr<TranscriptStore> store)
      : inner_(std::move(inner)), recorder_(*inner_, std::move(store)) {}
  ChatResponse Complete(const ChatRequest& r) override {
    return recorder_.Complete(r);
  }

 private:
  std::unique_ptr<ChatEndpoint> inner_;
  RecordingChatEndpoint recorder_;
};

class OwningRecordingNews : public NewsEndpoint {
 public:
  OwningRecordingNews(std::unique_ptr<NewsEndpoint> inner,
                      std::shared_ptr<TranscriptStore> store)
      : inner_(std::move(inner)), recorder_(*inner_, std::move(store)) {}
  std::vector<NewsArticle> Search(const NewsQuery& q) override {
    return recorder_.Search(q);
  }

 private:
  std::unique_ptr<NewsEndpoint> inner_;
  RecordingNewsEndpoint recorder_;
};

std::vector<Json> ReadIfExists(const fs::path& path) {
  if (!fs::exists(path)) return {};
  return ReadJsonLines(path);
}

bool SafeTag(const std::string& tag) {
  if (tag.empty()) return false;
  return std::all_of(tag.begin(), tag.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  });
}

}  // namespace

PromptStyle PipelineConfig::SelfplayStyle() const {
  return selfplay_style ? *selfplay_style : DefaultStyleForModel(selfplay_model);
}

const ModelSpec* PipelineConfig::FindModel(const std::string& tag) const {
  for (const auto& m : forecast_models) {
    if (m.tag == tag) return &m;
  }
  return nullptr;
}

PipelineConfig PipelineConfig::Load(const fs::path& path) {
  Json j;
  try {
    j = Json::parse(ReadFile(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError("malformed_config", path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError("missing_config", e.what());
  }
  return FromJson(j, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

PipelineConfig PipelineConfig::FromJson(const Json& j, const fs::path& base) {
  PipelineConfig c;
  try {
    c.work_dir = Resolve(base, Get<std::string>(j, "work_dir", "work"));
    c.questions = Resolve(base, Get<std::string>(j, "questions", ""));
    c.questions_format = Get<std::string>(j, "questions_format", "jsonl");
    if (auto it = j.find("csv_columns"); it != j.end()) {
      auto& m = c.csv_columns;
      m.id = Get<std::string>(*it, "id", m.id);
      m.title = Get<std::string>(*it, "title", m.title);
      m.background = Get<std::string>(*it, "background", m.background);
      m.resolution_criteria =
          Get<std::string>(*it, "resolution_criteria", m.resolution_criteria);
      m.close_date = Get<std::string>(*it, "close_date", m.close_date);
      m.resolution_date = Get<std::string>(*it, "resolution_date", m.resolution_date);
      m.outcome = Get<std::string>(*it, "outcome", m.outcome);
    }
    if (auto it = j.find("partition"); it != j.end()) {
      c.partition = Partition::FromJson(*it);
    }
    if (auto it = j.find("chat"); it != j.end()) c.chat = EndpointFromJson(*it, base);
    if (auto it = j.find("news"); it != j.end()) c.news = EndpointFromJson(*it, base);
    if (auto it = j.find("news_options"); it != j.end()) {
      auto& n = c.news_options;
      n.query_model = Get<std::string>(*it, "query_model", n.query_model);
      n.summary_model = Get<std::string>(*it, "summary_model", n.summary_model);
      n.max_queries = Get<std::size_t>(*it, "max_queries", n.max_queries);
      n.per_query_limit = Get<std::size_t>(*it, "per_query_limit", n.per_query_limit);
      n.max_articles = Get<std::size_t>(*it, "max_articles", n.max_articles);
    }
    if (auto it = j.find("selfplay"); it != j.end()) {
      c.selfplay_model = Get<std::string>(*it, "model", "");
      if (auto s = it->find("style"); s != it->end() && !s->is_null()) {
        c.selfplay_style = PromptStyleFromString(s->get<std::string>());
      }
      c.selfplay_max_retries = Get<int>(*it, "max_retries", c.selfplay_max_retries);
      c.temperature = Get<double>(*it, "temperature", c.temperature);
      if (auto t = it->find("max_tokens"); t != it->end() && !t->is_null()) {
        c.max_tokens = t->get<int>();
      }
    }
    if (auto it = j.find("forecast_models"); it != j.end()) {
      for (const auto& m : *it) {
        ModelSpec spec;
        spec.tag = Get<std::string>(m, "tag", "");
        spec.kind = Get<std::string>(m, "kind", "chat");
        spec.model = Get<std::string>(m, "model", "");
        if (auto s = m.find("style"); s != m.end() && !s->is_null()) {
          spec.style = PromptStyleFromString(s->get<std::string>());
        }
        spec.policy = Get<std::string>(m, "policy", "");
        c.forecast_models.push_back(std::move(spec));
      }
    }
    if (auto it = j.find("dpo"); it != j.end()) c.dpo = DpoConfig::FromJson(*it);
    c.label_mode = LabelModeFromString(Get<std::string>(j, "label_mode", "true_outcome"));
    c.seed = Get<std::uint64_t>(j, "seed", 0);
    c.concurrency = Get<std::size_t>(j, "concurrency", c.concurrency);
    if (auto it = j.find("retry"); it != j.end()) {
      c.retry.max_attempts = Get<int>(*it, "max_attempts", c.retry.max_attempts);
      c.retry.initial_delay = std::chrono::milliseconds(
          Get<long long>(*it, "initial_delay_ms", c.retry.initial_delay.count()));
      c.retry.backoff_factor = Get<double>(*it, "backoff_factor", c.retry.backoff_factor);
    }
    c.featurizer_dims = Get<std::size_t>(j, "featurizer_dims", c.featurizer_dims);
  } catch (const Json::exception& e) {
    throw ConfigError("malformed_config", e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("malformed_config", e.what());
  }
  c.news_options.retry = c.retry;
  c.Validate();
  return c;
}

Json PipelineConfig::ToJson() const {
  Json models = Json::array();
  for (const auto& m : forecast_models) {
    models.push_back({{"tag", m.tag},
                      {"kind", m.kind},
                      {"model", m.model},
                      {"style", m.style ? Json(ToString(*m.style)) : Json()},
                      {"policy", m.policy.string()}});
  }
  return Json{
      {"work_dir", work_dir.string()},
      {"questions", questions.string()},
      {"questions_format", questions_format},
      {"partition", partition.ToJson()},
      {"chat", EndpointToJson(chat)},
      {"news", EndpointToJson(news)},
      {"news_options",
       {{"query_model", news_options.query_model},
        {"summary_model", news_options.summary_model},
        {"max_queries", news_options.max_queries},
        {"per_query_limit", news_options.per_query_limit},
        {"max_articles", news_options.max_articles}}},
      {"selfplay",
       {{"model", selfplay_model},
        {"style", selfplay_style ? Json(ToString(*selfplay_style)) : Json()},
        {"max_retries", selfplay_max_retries},
        {"temperature", temperature},
        {"max_tokens", max_tokens ? Json(*max_tokens) : Json()}}},
      {"forecast_models", std::move(models)},
      {"dpo", dpo.ToJson()},
      {"label_mode", ToString(label_mode)},
      {"seed", seed},
      {"concurrency", concurrency},
      {"retry",
       {{"max_attempts", retry.max_attempts},
        {"initial_delay_ms", retry.initial_delay.count()},
        {"backoff_factor", retry.backoff_factor}}},
      {"featurizer_dims", featurizer_dims}};
}

void PipelineConfig::Validate() const {
  partition.Validate();
  if (concurrency == 0) throw ConfigError("invalid_concurrency", "must be >= 1");
  if (questions_format != "jsonl" && questions_format != "csv") {
    throw ConfigError("invalid_questions_format", questions_format);
  }
  ValidateEndpoint(chat, "chat");
  ValidateEndpoint(news, "news");
  if (selfplay_max_retries < 0) {
    throw ConfigError("invalid_selfplay", "max_retries must be >= 0");
  }
  if (retry.max_attempts < 1) throw ConfigError("invalid_retry", "max_attempts");
  if (featurizer_dims == 0) throw ConfigError("invalid_featurizer", "dims");
  std::set<std::string> tags;
  for (const auto& m : forecast_models) {
    if (!SafeTag(m.tag)) throw ConfigError("invalid_model_tag", "'" + m.tag + "'");
    if (!tags.insert(m.tag).second) throw ConfigError("duplicate_model_tag", m.tag);
    if (m.kind == "chat") {
      if (m.model.empty()) throw ConfigError("invalid_model", m.tag + ": no model");
    } else if (m.kind == "toy") {
      if (m.policy.empty()) throw ConfigError("invalid_model", m.tag + ": no policy");
    } else {
      throw ConfigError("invalid_model", m.tag + ": kind " + m.kind);
    }
  }
  dpo.Validate();
}

std::unique_ptr<ChatEndpoint> MakeChatEndpoint(const EndpointConfig& c) {
  if (c.mode == "replay") {
    return std::make_unique<ReplayChatEndpoint>(
        std::make_shared<TranscriptStore>(c.transcripts));
  }
  HttpChatConfig http{.base_url = c.base_url,
                      .api_key = RequireApiKey(c),
                      .timeout = std::chrono::seconds(c.timeout_seconds)};
  if (!c.path.empty()) http.path = c.path;
  auto live = std::make_unique<HttpChatEndpoint>(std::move(http));
  if (c.mode == "record") {
    return std::make_unique<OwningRecordingChat>(
        std::move(live), std::make_shared<TranscriptStore>(c.transcripts));
  }
  return live;
}

std::unique_ptr<NewsEndpoint> MakeNewsEndpoint(const EndpointConfig& c) {
  if (c.mode == "replay") {
    return std::make_unique<ReplayNewsEndpoint>(
        std::make_shared<TranscriptStore>(c.transcripts));
  }
  HttpNewsConfig http{.base_url = c.base_url,
                      .api_key = RequireApiKey(c),
                      .timeout = std::chrono::seconds(c.timeout_seconds)};
  if (!c.path.empty()) http.path = c.path;
  if (!c.key_header.empty()) http.key_header = c.key_header;
  auto live = std::make_unique<HttpNewsEndpoint>(std::move(http));
  if (c.mode == "record") {
    return std::make_unique<OwningRecordingNews>(
        std::move(live), std::make_shared<TranscriptStore>(c.transcripts));
  }
  return live;
}

void WriteManifest(const fs::path& artifact, Json counts) {
  counts["content_hash"] = Sha256Hex(ReadFile(artifact));
  counts["artifact"] = artifact.filename().string();
  fs::path manifest = artifact;
  manifest += ".manifest.json";
  WriteFileAtomic(manifest, counts.dump(2) + "\n");
}

Pipeline::Pipeline(PipelineConfig config)
    : config_(std::move(config)),
      paths_{config_.work_dir},
      limiter_(static_cast<std::ptrdiff_t>(config_.concurrency)) {
  config_.Validate();
}

ChatEndpoint& Pipeline::Chat() {
  if (chat_override_) return *chat_override_;
  if (!chat_) chat_ = MakeChatEndpoint(config_.chat);
  return *chat_;
}

NewsEndpoint& Pipeline::News() {
  if (news_override_) return *news_override_;
  if (!news_) news_ = MakeNewsEndpoint(config_.news);
  return *news_;
}

QuestionStore Pipeline::LoadStore() const {
  if (!fs::exists(paths_.store())) {
    throw Error("missing_artifact", paths_.store().string() + " (run ingest)");
  }
  return QuestionStore::Load(paths_.store());
}

const std::map<std::string, NewsContext>& Pipeline::LoadNews() const {
  std::lock_guard lock(news_mu_);
  if (!news_cache_) {
    std::map<std::string, NewsContext> news;
    for (const auto& j : ReadIfExists(paths_.news())) {
      auto c = NewsContext::FromJson(j);
      news.emplace(c.question_id, std::move(c));
    }
    news_cache_ = std::move(news);
  }
  return *news_cache_;
}

std::string Pipeline::PromptFor(const Question& q, PromptStyle style) const {
  const auto& news = LoadNews();
  NewsContext context;
  if (auto it = news.find(q.id); it != news.end()) {
    context = it->second;
  } else {
    context.question_id = q.id;
    context.window = GetRetrievalWindow(q);
  }
  return RenderPrompt(MakeBundle(q, std::move(context), style));
}

StageSummary Pipeline::Ingest() {
  if (config_.questions.empty()) {
    throw ConfigError("missing_questions", "no questions input configured");
  }
  std::vector<Json> records;
  if (config_.questions_format == "csv") {
    std::ifstream in(config_.questions, std::ios::binary);
    if (!in) throw Error("io_error", "cannot open " + config_.questions.string());
    records = ReadCsvRecords(in, config_.csv_columns);
  } else {
    records = ReadJsonLines(config_.questions);
  }
  // Validation depends on the input alone; previously stored questions that
  // the input does not mention are kept.
  IngestResult result = fdpo::Ingest(records);
  std::vector<Question> merged = result.store.questions();
  if (fs::exists(paths_.store())) {
    for (const auto& q : QuestionStore::Load(paths_.store())) {
      if (!result.store.Contains(q.id)) merged.push_back(q);
    }
  }
  QuestionStore store(std::move(merged));
  store.Save(paths_.store());

  std::vector<Json> rejections;
  std::map<std::string, int> by_reason;
  for (const auto& r : result.rejected) {
    ++by_reason[r.reason];
    rejections.push_back({{"index", r.index},
                          {"id", r.id},
                          {"reason", r.reason},
                          {"detail", r.detail}});
  }
  WriteFileAtomic(paths_.rejections(), ToJsonLines(rejections));

  StageSummary summary{"ingest"};
  summary.counts = {{"records", records.size()},
                    {"accepted", result.accepted()},
                    {"rejected", result.rejected.size()},
                    {"rejected_by_reason", by_reason},
                    {"stored", store.size()}};
  WriteManifest(paths_.store(), summary.counts);
  return summary;
}

StageSummary Pipeline::FetchNews() {
  ChatEndpoint& model = Chat();
  NewsEndpoint& api = News();
  const QuestionStore store = LoadStore();
  const Split split = PartitionStore(store, config_.partition);
  std::map<std::string, NewsContext> done = LoadNews();

  std::vector<const Question*> todo;
  for (const auto* group : {&split.train, &split.test}) {
    for (const auto& q : *group) {
      if (!done.count(q.id)) todo.push_back(&q);
    }
  }
  LimitedChatEndpoint chat(model, limiter_);
  LimitedNewsEndpoint news(api, limiter_);
  std::vector<NewsContext> results(todo.size());
  ParallelFor(todo.size(), config_.concurrency, [&](std::size_t i) {
    results[i] = CollectNews(*todo[i], chat, news, config_.news_options);
  });

  std::size_t degraded = 0;
  for (auto& c : results) {
    if (!c.warnings.empty()) ++degraded;
    done[c.question_id] = std::move(c);
  }
  std::vector<Json> lines;
  std::size_t articles = 0;
  for (const auto& [id, c] : done) {
    articles += c.summaries.size();
    lines.push_back(c.ToJson());
  }
  WriteFileAtomic(paths_.news(), ToJsonLines(lines));
  {
    std::lock_guard lock(news_mu_);
    news_cache_ = std::move(done);
  }

  StageSummary summary{"fetch-news"};
  summary.counts = {{"questions", lines.size()},
                    {"fetched_now", todo.size()},
                    {"degraded", degraded},
                    {"summaries", articles}};
  WriteManifest(paths_.news(), summary.counts);
  return summary;
}

StageSummary Pipeline::SelfPlay() {
  if (config_.selfplay_model.empty()) {
    throw ConfigError("missing_selfplay_model", "selfplay.model is not set");
  }
  ChatEndpoint& base = Chat();  // resolves credentials before any work
  const QuestionStore store = LoadStore();
  const Split split = PartitionStore(store, config_.partition);

  std::map<std::string, Json> status;
  for (auto& j : ReadIfExists(paths_.selfplay_status())) {
    status[RequireString(j, "question_id")] = j;
  }
  std::set<std::string> processed;
  for (const auto& [id, s] : status) {
    const std::string st = RequireString(s, "status");
    if (st == "pair" || st == "dropped") processed.insert(id);
  }
  std::vector<ReasoningTrace> traces;
  for (const auto& j : ReadIfExists(paths_.traces())) {
    auto t = ReasoningTrace::FromJson(j);
    auto it = status.find(t.question_id);
    // Traces without a committed "pair" status are leftovers of an
    // interrupted run and are regenerated.
    if (it != status.end() && RequireString(it->second, "status") == "pair") {
      traces.push_back(std::move(t));
    }
  }
  std::map<std::string, std::string> prompts;
  for (const auto& j : ReadIfExists(paths_.prompts())) {
    prompts[RequireString(j, "question_id")] = RequireString(j, "prompt");
  }

  const PromptStyle style = config_.SelfplayStyle();
  std::vector<const Question*> todo;
  for (const auto& q : split.train) {
    if (!processed.count(q.id)) {
      todo.push_back(&q);
    } else if (RequireString(status[q.id], "status") == "pair" && !prompts.count(q.id)) {
      // Committed by an interrupted run before prompts were written.
      prompts[q.id] = PromptFor(q, style);
    }
  }

  GenerationConfig gen{.model = config_.selfplay_model,
                       .temperature = config_.temperature,
                       .max_retries = config_.selfplay_max_retries,
                       .max_tokens = config_.max_tokens,
                       .retry = config_.retry};
  const auto& news = LoadNews();
  LimitedChatEndpoint chat(base, limiter_);

  std::mutex writer_mu;
  std::ofstream trace_log(paths_.traces(), std::ios::app | std::ios::binary);
  std::ofstream status_log(paths_.selfplay_status(), std::ios::app | std::ios::binary);
  struct Outcome {
    std::string prompt;
    PairResult result;
  };
  std::vector<Outcome> outcomes(todo.size());
  ParallelFor(todo.size(), config_.concurrency, [&](std::size_t i) {
    const Question& q = *todo[i];
    NewsContext context;
    if (auto it = news.find(q.id); it != news.end()) {
      context = it->second;
    } else {
      context.question_id = q.id;
      context.window = GetRetrievalWindow(q);
    }
    const PromptBundle bundle = MakeBundle(q, std::move(context), style);
    Outcome out{RenderPrompt(bundle), GeneratePair(q, bundle, chat, gen)};
    {
      std::lock_guard lock(writer_mu);
      if (out.result.traces) {
        trace_log << CanonicalDump(out.result.traces->first.ToJson()) << '\n'
                  << CanonicalDump(out.result.traces->second.ToJson()) << '\n';
        trace_log.flush();
      }
      status_log << CanonicalDump(Json{{"question_id", q.id},
                                       {"status", ToString(out.result.status)},
                                       {"attempts", out.result.attempts}})
                 << '\n';
      status_log.flush();
    }
    outcomes[i] = std::move(out);
  });
  trace_log.close();
  status_log.close();

  for (std::size_t i = 0; i < todo.size(); ++i) {
    const Question& q = *todo[i];
    auto& out = outcomes[i];
    Json s{{"question_id", q.id},
           {"status", ToString(out.result.status)},
           {"attempts", out.result.attempts}};
    if (!out.result.error.empty()) s["error"] = out.result.error;
    status[q.id] = std::move(s);
    if (out.result.traces) {
      traces.push_back(std::move(out.result.traces->first));
      traces.push_back(std::move(out.result.traces->second));
      prompts[q.id] = std::move(out.prompt);
    } else {
      prompts.erase(q.id);
    }
  }

  std::sort(traces.begin(), traces.end(),
            [](const ReasoningTrace& a, const ReasoningTrace& b) {
              if (a.question_id != b.question_id) return a.question_id < b.question_id;
              return a.attempt_index < b.attempt_index;
            });
  std::vector<Json> trace_lines, status_lines, prompt_lines;
  for (const auto& t : traces) trace_lines.push_back(t.ToJson());
  std::size_t kept = 0, dropped = 0, failed = 0;
  for (const auto& [id, s] : status) {
    const std::string st = RequireString(s, "status");
    kept += st == "pair";
    dropped += st == "dropped";
    failed += st == "generation_failed";
    status_lines.push_back(s);
  }
  for (const auto& [id, p] : prompts) {
    prompt_lines.push_back({{"question_id", id}, {"prompt", p}, {"style", ToString(style)}});
  }
  if (trace_lines.size() != 2 * kept) {
    throw Error("trace_count_invariant", std::to_string(trace_lines.size()) +
                                             " traces for " + std::to_string(kept) +
                                             " kept questions");
  }
  WriteFileAtomic(paths_.traces(), ToJsonLines(trace_lines));
  WriteFileAtomic(paths_.selfplay_status(), ToJsonLines(status_lines));
  WriteFileAtomic(paths_.prompts(), ToJsonLines(prompt_lines));

  StageSummary summary{"selfplay"};
  summary.counts = {{"train_questions", split.train.size()},
                    {"generated_now", todo.size()},
                    {"kept", kept},
                    {"dropped", dropped},
                    {"failed", failed},
                    {"traces", trace_lines.size()},
                    {"model", config_.selfplay_model},
                    {"style", ToString(style)}};
  WriteManifest(paths_.traces(), summary.counts);
  return summary;
}

StageSummary Pipeline::Rank(std::optional<LabelMode> mode,
                            std::optional<std::uint64_t> seed, std::string name) {
  const LabelMode m = mode.value_or(config_.label_mode);
  const std::uint64_t s = seed.value_or(config_.seed);
  if (name.empty()) name = ToString(m);
  if (!SafeTag(name)) throw ConfigError("invalid_name", name);
  const QuestionStore store = LoadStore();
  if (!fs::exists(paths_.traces())) {
    throw Error("missing_artifact", paths_.traces().string() + " (run selfplay)");
  }
  std::vector<ReasoningTrace> traces;
  for (const auto& j : ReadJsonLines(paths_.traces())) {
    traces.push_back(ReasoningTrace::FromJson(j));
  }
  const BuildPairsResult built = BuildPairs(traces, store, m, s);
  std::vector<Json> lines;
  for (const auto& p : built.pairs) lines.push_back(p.ToJson());
  const auto path = paths_.pairs(name);
  WriteFileAtomic(path, ToJsonLines(lines));

  std::map<std::string, int> skipped;
  for (const auto& [id, reason] : built.skipped) ++skipped[reason];
  StageSummary summary{"rank"};
  summary.counts = {{"pairs", built.pairs.size()},
                    {"skipped", skipped},
                    {"label_mode", ToString(m)},
                    {"seed", s},
                    {"name", name}};
  WriteManifest(path, summary.counts);
  summary.counts["content_hash"] = Sha256Hex(ReadFile(path));
  return summary;
}

StageSummary Pipeline::EmitDpo(const std::string& name) {
  const auto pairs_path = paths_.pairs(name);
  if (!fs::exists(pairs_path)) {
    throw Error("missing_artifact", pairs_path.string() + " (run rank)");
  }
  std::vector<PreferencePair> pairs;
  for (const auto& j : ReadJsonLines(pairs_path)) {
    pairs.push_back(PreferencePair::FromJson(j));
  }
  std::uint64_t seed = config_.seed;
  fs::path pairs_manifest = pairs_path;
  pairs_manifest += ".manifest.json";
  if (fs::exists(pairs_manifest)) {
    seed = Json::parse(ReadFile(pairs_manifest)).value("seed", seed);
  }
  std::map<std::string, std::string> prompts;
  for (const auto& j : ReadIfExists(paths_.prompts())) {
    prompts[RequireString(j, "question_id")] = RequireString(j, "prompt");
  }
  const auto manifest =
      EmitDataset(MakeExamples(pairs, prompts), paths_.dataset(name), seed);
  StageSummary summary{"emit-dpo"};
  summary.counts = manifest.ToJson();
  summary.counts["name"] = name;
  return summary;
}

StageSummary Pipeline::TrainToy(const std::string& name,
                                std::optional<std::uint64_t> seed) {
  const auto examples = LoadDataset(paths_.dataset(name));
  DpoConfig cfg = config_.dpo;
  if (seed) cfg.seed = *seed;
  const PromptFeaturizer featurizer(config_.featurizer_dims);
  TrainResult result = fdpo::TrainToy(examples, cfg, featurizer);

  WriteFileAtomic(paths_.policy(name), result.policy.ToJson().dump() + "\n");
  WriteFileAtomic(paths_.policy("init"), result.reference.ToJson().dump() + "\n");
  WriteFileAtomic(paths_.training_report(name), result.report.ToJsonLines());

  StageSummary summary{"train-toy"};
  Json losses = Json::array();
  for (const auto& e : result.report.epochs) losses.push_back(e.train_loss);
  summary.counts = {{"name", name},
                    {"train_pairs", result.report.train_pairs},
                    {"validation_pairs", result.report.validation_pairs},
                    {"skipped_pairs", result.report.skipped_pairs},
                    {"epochs", cfg.epochs},
                    {"seed", cfg.seed},
                    {"train_loss", losses},
                    {"plateau_epoch", result.report.plateau_epoch
                                          ? Json(*result.report.plateau_epoch)
                                          : Json()}};
  WriteManifest(paths_.policy(name), summary.counts);
  return summary;
}

StageSummary Pipeline::Forecast(const std::string& tag) {
  const ModelSpec* spec = config_.FindModel(tag);
  if (!spec) throw ConfigError("unknown_model_tag", tag);
  ChatEndpoint* model = spec->kind == "chat" ? &Chat() : nullptr;
  const QuestionStore store = LoadStore();
  const Split split = PartitionStore(store, config_.partition);
  const auto out_path = paths_.forecasts(tag);

  std::map<std::string, ForecastRecord> done;
  for (const auto& j : ReadIfExists(out_path)) {
    auto r = ForecastRecord::FromJson(j);
    done.emplace(r.question_id, std::move(r));
  }
  std::vector<const Question*> todo;
  for (const auto& q : split.test) {
    if (!done.count(q.id)) todo.push_back(&q);
  }
  const PromptStyle style = spec->style ? *spec->style
                            : spec->kind == "toy"
                                ? config_.SelfplayStyle()
                                : DefaultStyleForModel(spec->model);

  std::vector<std::optional<ForecastRecord>> results(todo.size());
  std::vector<std::string> errors(todo.size());
  if (spec->kind == "toy") {
    const fs::path policy_path = Resolve(config_.work_dir, spec->policy);
    const ToyPolicy policy = ToyPolicy::FromJson(Json::parse(ReadFile(policy_path)));
    const PromptFeaturizer featurizer(config_.featurizer_dims);
    if (policy.feature_dim() != featurizer.dim()) {
      throw ConfigError("policy_mismatch", "feature dimension differs from config");
    }
    for (std::size_t i = 0; i < todo.size(); ++i) {
      const Question& q = *todo[i];
      const double p = policy.ExpectedForecast(featurizer.Features(PromptFor(q, style)));
      results[i] = ForecastRecord{q.id, p, q.outcome, tag};
    }
  } else {
    LimitedChatEndpoint chat(*model, limiter_);
    ParallelFor(todo.size(), config_.concurrency, [&](std::size_t i) {
      const Question& q = *todo[i];
      ChatRequest request;
      request.model = spec->model;
      request.messages = {{"user", PromptFor(q, style)}};
      request.temperature = config_.temperature;
      request.max_tokens = config_.max_tokens;
      request.scope = q.id;
      for (int attempt = 0; attempt <= config_.selfplay_max_retries; ++attempt) {
        request.sample_index = attempt;
        try {
          auto response =
              WithRetry(config_.retry, [&] { return chat.Complete(request); });
          auto parsed = ParseForecast(response.text);
          if (auto* f = std::get_if<ParsedForecast>(&parsed)) {
            results[i] = ForecastRecord{q.id, f->probability, q.outcome, tag};
            return;
          }
          errors[i] = ToString(std::get<ParseError>(parsed));
        } catch (const EndpointError& e) {
          errors[i] = e.what();
          return;
        }
      }
    });
  }

  std::vector<Json> failures;
  for (std::size_t i = 0; i < todo.size(); ++i) {
    if (results[i]) {
      done[todo[i]->id] = *results[i];
    } else {
      spdlog::warn("{}: no forecast for {}: {}", tag, todo[i]->id, errors[i]);
      failures.push_back({{"question_id", todo[i]->id}, {"error", errors[i]}});
    }
  }
  std::vector<Json> lines;
  for (const auto& [id, r] : done) lines.push_back(r.ToJson());
  WriteFileAtomic(out_path, ToJsonLines(lines));
  fs::path failure_path = out_path;
  failure_path.replace_extension(".failures.jsonl");
  if (!failures.empty()) {
    WriteFileAtomic(failure_path, ToJsonLines(failures));
  } else {
    std::error_code ec;
    fs::remove(failure_path, ec);
  }

  StageSummary summary{"forecast"};
  summary.counts = {{"tag", tag},
                    {"kind", spec->kind},
                    {"test_questions", split.test.size()},
                    {"forecasts", lines.size()},
                    {"failed", failures.size()}};
  WriteManifest(out_path, summary.counts);
  return summary;
}

StageSummary Pipeline::Evaluate(const std::vector<std::string>& tags,
                                VarianceMode mode) {
  std::vector<std::string> selected = tags;
  if (selected.empty()) {
    const fs::path dir = paths_.root / "forecasts";
    if (fs::exists(dir)) {
      for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.ends_with(".jsonl") && !name.ends_with(".failures.jsonl")) {
          selected.push_back(entry.path().stem().string());
        }
      }
    }
    std::sort(selected.begin(), selected.end());
  }
  if (selected.empty()) throw Error("empty_sample", "no forecast files to evaluate");
  std::map<std::string, std::vector<ForecastRecord>> models;
  for (const auto& tag : selected) {
    const auto path = paths_.forecasts(tag);
    if (!fs::exists(path)) {
      throw Error("missing_artifact", path.string() + " (run forecast --tag " + tag + ")");
    }
    auto& records = models[tag];
    for (const auto& j : ReadJsonLines(path)) records.push_back(ForecastRecord::FromJson(j));
  }
  const EvalReport report = fdpo::Evaluate(std::move(models), mode);
  WriteReport(report, paths_.report_dir());

  StageSummary summary{"evaluate"};
  Json means = Json::object();
  for (const auto& [tag, s] : report.summaries) means[tag] = s.stats.mean;
  summary.counts = {{"tags", selected},
                    {"pairwise_tests", report.tests.size()},
                    {"mean_brier", means}};
  WriteManifest(paths_.report_dir() / "report.jsonl", summary.counts);
  return summary;
}

}  // namespace fdpo
