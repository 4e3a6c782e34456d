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

#include "fdpo/synthetic.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "fdpo/pipeline.h"
#include "fdpo/random.h"

namespace fdpo {
namespace {

namespace fs = std::filesystem;
using std::chrono::days;

struct Topic {
  const char* marker;  // appears in every title of the topic
  double base_logit;
  const char* title;   // {E} is replaced by the entity name
  const char* background;
  const char* criteria;
};

constexpr std::array<Topic, 8> kTopics = {{
    {"municipal election", -0.4, "Will the {E} Alliance win the municipal election",
     "The {E} Alliance is contesting a closely watched municipal election.",
     "Resolves YES if official results name the {E} Alliance as winner."},
    {"interest rates", -0.2, "Will the {E} central bank cut interest rates",
     "The {E} central bank meets to set policy interest rates.",
     "Resolves YES if the announced policy rate is lower than before the meeting."},
    {"championship final", 0.0, "Will {E} FC win the championship final",
     "{E} FC has reached the regional championship final.",
     "Resolves YES if {E} FC is declared champion, including after extra time."},
    {"product launch", 0.4, "Will {E} Labs complete its product launch",
     "{E} Labs announced a product launch for this quarter.",
     "Resolves YES if the product is generally available by the stated date."},
    {"crude benchmark", -0.6, "Will the {E} crude benchmark close above target",
     "Analysts track whether the {E} crude benchmark will exceed its target.",
     "Resolves YES if the benchmark settles above the target on any day."},
    {"budget bill", 0.3, "Will the {E} assembly pass the budget bill",
     "The {E} assembly is debating an annual budget bill.",
     "Resolves YES if the bill passes its final reading."},
    {"temperature high", -0.9, "Will {E} record a new monthly temperature high",
     "Meteorologists in {E} are watching for record temperatures.",
     "Resolves YES if the national weather service confirms a new monthly record."},
    {"box office", -0.3, "Will the film {E} top the weekend box office",
     "The film {E} opens in wide release this month.",
     "Resolves YES if {E} ranks first in reported weekend grosses."},
}};

constexpr std::array<const char*, 4> kSources = {"Wire Daily", "Metro Ledger",
                                                 "Global Courier", "Signal Post"};
constexpr std::array<const char*, 12> kSyllables = {
    "ar", "bel", "cor", "dan", "el", "fir", "gal", "hen", "ist", "jor", "kel", "lum"};

constexpr double kCueWeight = 1.6;
constexpr char kPositiveWord[] = "tailwinds";
constexpr char kNegativeWord[] = "headwinds";
constexpr char kNeutralWord[] = "mixed";

double Logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string Replace(std::string s, const std::string& name) {
  for (auto pos = s.find("{E}"); pos != std::string::npos; pos = s.find("{E}")) {
    s.replace(pos, 3, name);
  }
  return s;
}

std::string EntityName(std::mt19937_64& rng) {
  std::string name;
  const auto n = 2 + UniformIndex(rng, 2);
  for (std::uint64_t i = 0; i < n; ++i) name += kSyllables[UniformIndex(rng, kSyllables.size())];
  name[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
  return name;
}

Date RandomDate(std::mt19937_64& rng, Date first, Date last) {
  return first + days(UniformIndex(rng, (last - first).count() + 1));
}

const char* CueWord(std::mt19937_64& rng, int cue) {
  const double u = UniformUnit(rng);
  if (cue == 0) return u < 0.5 ? kNeutralWord : u < 0.75 ? kPositiveWord : kNegativeWord;
  const char* aligned = cue > 0 ? kPositiveWord : kNegativeWord;
  const char* opposed = cue > 0 ? kNegativeWord : kPositiveWord;
  return u < 0.7 ? aligned : u < 0.85 ? kNeutralWord : opposed;
}

std::size_t CountWord(std::string_view text, std::string_view word) {
  std::size_t n = 0;
  for (auto pos = text.find(word); pos != std::string_view::npos;
       pos = text.find(word, pos + word.size())) {
    ++n;
  }
  return n;
}

std::string LastUserMessage(const ChatRequest& r) {
  for (auto it = r.messages.rbegin(); it != r.messages.rend(); ++it) {
    if (it->role == "user") return it->content;
  }
  return {};
}

std::string LineAfter(std::string_view text, std::string_view label) {
  auto pos = text.find(label);
  if (pos == std::string_view::npos) return {};
  pos += label.size();
  auto end = text.find('\n', pos);
  return std::string(text.substr(pos, end == std::string_view::npos ? end : end - pos));
}

std::string FormatTwoDecimals(double p) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", p);
  return buf;
}

ChatResponse AnswerQueries(const std::string& prompt) {
  const std::string title = LineAfter(prompt, "Question: ");
  std::string subject = title;
  if (subject.starts_with("Will ")) subject = subject.substr(5);
  if (auto by = subject.find(" by "); by != std::string::npos) subject.resize(by);
  std::string topic;
  for (const auto& t : kTopics) {
    if (title.find(t.marker) != std::string::npos) topic = t.marker;
  }
  return {"1. " + subject + "\n2. \"" + topic + " outlook\"\n- " + subject +
          " latest news\n"};
}

ChatResponse AnswerSummary(const std::string& prompt) {
  // Body follows the blank line after the header block.
  auto pos = prompt.find("\n\n", prompt.find("Title: "));
  std::string body = pos == std::string::npos ? "" : prompt.substr(pos + 2);
  if (auto dot = body.find(". "); dot != std::string::npos) body.resize(dot + 1);
  return {"In brief: " + body};
}

}  // namespace

const SyntheticQuestion* SyntheticWorld::Find(const std::string& id) const {
  auto it = std::lower_bound(
      questions.begin(), questions.end(), id,
      [](const SyntheticQuestion& q, const std::string& v) { return q.id < v; });
  return it != questions.end() && it->id == id ? &*it : nullptr;
}

SyntheticWorld MakeSyntheticWorld(const SyntheticOptions& options) {
  SyntheticWorld world;
  std::mt19937_64 rng(options.seed);
  const Partition partition = Partition::Default();
  const std::size_t total =
      options.train_questions + options.test_questions + options.gap_questions;

  for (std::size_t i = 0; i < total; ++i) {
    Date resolution;
    if (i < options.train_questions) {
      resolution = RandomDate(rng, partition.train_start, partition.train_end);
    } else if (i < options.train_questions + options.test_questions) {
      resolution = RandomDate(rng, partition.test_start, partition.test_end);
    } else {
      resolution = RandomDate(rng, partition.train_end + days(1), partition.test_start - days(1));
    }
    const Date close = resolution - days(UniformIndex(rng, 4));
    SyntheticQuestion sq;
    char id[32];
    std::snprintf(id, sizeof(id), "syn-%04zu", i + 1);
    sq.id = id;
    sq.topic = static_cast<int>(UniformIndex(rng, kTopics.size()));
    sq.cue = static_cast<int>(UniformIndex(rng, 3)) - 1;
    const Topic& topic = kTopics[sq.topic];
    sq.latent_logit = topic.base_logit + kCueWeight * sq.cue;
    sq.stubborn = UniformUnit(rng) < 0.06;
    const int outcome = UniformUnit(rng) < Logistic(sq.latent_logit) ? 1 : 0;
    const std::string entity = EntityName(rng);

    world.records.push_back(
        {{"id", sq.id},
         {"title", Replace(topic.title, entity) + " by " + close.ToString() + "?"},
         {"background", Replace(topic.background, entity)},
         {"resolution_criteria", Replace(topic.criteria, entity)},
         {"close_date", close.ToString()},
         {"resolution_date", resolution.ToString()},
         {"outcome", outcome}});

    auto& articles = world.articles[sq.id];
    const auto n_articles = 8 + UniformIndex(rng, 7);
    for (std::uint64_t k = 0; k < n_articles; ++k) {
      // Spread from three weeks before resolution to two days after it.
      const int day_offset = -20 + static_cast<int>(UniformIndex(rng, 23));
      const Timestamp when = StartOfDay(resolution + days(day_offset)) +
                             std::chrono::minutes(UniformIndex(rng, 24 * 60));
      const char* word = CueWord(rng, sq.cue);
      NewsArticle a{
          .source = kSources[UniformIndex(rng, kSources.size())],
          .published_at = when,
          .title = entity + " " + topic.marker + " update " + std::to_string(k + 1),
          .body = "Observers covering " + entity + " describe " + word +
                  " around the " + topic.marker + ". Reporting continued on " +
                  (resolution + days(day_offset)).ToString() + " with no further detail."};
      articles.push_back(a);
      if (UniformUnit(rng) < 0.1) articles.push_back(a);  // syndicated copy
    }
    world.questions.push_back(std::move(sq));
  }

  if (options.include_invalid_records && !world.records.empty()) {
    Json ambiguous = world.records.front();
    ambiguous["id"] = "syn-x001";
    ambiguous["outcome"] = 0.5;
    Json duplicate = world.records.back();
    duplicate["title"] = "Duplicate of an earlier record";
    Json bad_date = world.records.front();
    bad_date["id"] = "syn-x002";
    bad_date["close_date"] = "2024-13-40";
    world.records.push_back(std::move(ambiguous));
    world.records.push_back(std::move(duplicate));
    world.records.push_back(std::move(bad_date));
  }
  std::sort(world.questions.begin(), world.questions.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return world;
}

ChatResponse SimulatedChatEndpoint::Complete(const ChatRequest& request) {
  const std::string prompt = LastUserMessage(request);
  if (prompt.starts_with("You are helping a forecaster research")) {
    return AnswerQueries(prompt);
  }
  if (prompt.starts_with("Summarize the following article")) {
    return AnswerSummary(prompt);
  }

  std::mt19937_64 rng(Fnv1a64(request.Key()));
  const SyntheticQuestion* sq = world_.Find(request.scope);
  if (UniformUnit(rng) < 0.04) {
    return {"After weighing the evidence I cannot settle on a single number."};
  }
  const std::string title = LineAfter(prompt, "Question: ");
  double topic_logit = 0.0;
  for (const auto& t : kTopics) {
    if (title.find(t.marker) != std::string::npos) topic_logit = t.base_logit;
  }
  const double pos = static_cast<double>(CountWord(prompt, kPositiveWord));
  const double neg = static_cast<double>(CountWord(prompt, kNegativeWord));
  const double evidence = (pos - neg) / (pos + neg + 1.0);
  double noise = StandardNormal(rng);
  if (sq != nullptr && sq->stubborn) noise = 0.0;
  const double belief = 0.6 * topic_logit + 1.4 * evidence + 0.9 * noise;
  const double p = std::clamp(std::round(100.0 * Logistic(belief)) / 100.0, 0.01, 0.99);
  const double prior = std::clamp(std::round(100.0 * Logistic(0.6 * topic_logit)) / 100.0,
                                  0.01, 0.99);

  std::string text;
  const bool think = prompt.starts_with("You are an expert superforecaster");
  if (think) text += "<think>\n";
  text += "The base rate for this kind of question suggests about *" +
          FormatTwoDecimals(prior) + "* before looking at the news.\n";
  text += "News coverage mentions " + std::to_string(static_cast<int>(pos)) +
          " signals of " + kPositiveWord + " and " +
          std::to_string(static_cast<int>(neg)) + " of " + kNegativeWord + ".\n";
  text += evidence > 0.1    ? "The recent reporting leans toward YES.\n"
          : evidence < -0.1 ? "The recent reporting leans toward NO.\n"
                            : "The reporting does not clearly favor either side.\n";
  if (think) text += "</think>\n";
  text += "Final forecast: *" + FormatTwoDecimals(p) + "*";
  return {text};
}

std::vector<NewsArticle> SimulatedNewsEndpoint::Search(const NewsQuery& query) {
  auto it = world_.articles.find(query.scope);
  if (it == world_.articles.end() || query.query.empty()) return {};
  const Timestamp lo = StartOfDay(query.from - days(1));
  const Timestamp hi = StartOfDay(query.to + days(2));
  std::vector<NewsArticle> out;
  for (const auto& a : it->second) {
    if (a.published_at >= lo && a.published_at < hi) out.push_back(a);
    if (out.size() >= query.limit) break;
  }
  return out;
}

namespace {

Json SyntheticConfigJson() {
  return Json{
      {"work_dir", "work"},
      {"questions", "questions.jsonl"},
      {"questions_format", "jsonl"},
      {"partition", Partition::Default().ToJson()},
      {"chat", {{"mode", "replay"}, {"transcripts", "transcripts/chat"}}},
      {"news", {{"mode", "replay"}, {"transcripts", "transcripts/news"}}},
      {"news_options",
       {{"query_model", "sim-news-assistant"},
        {"summary_model", "sim-news-assistant"},
        {"max_queries", 5},
        {"per_query_limit", 20},
        {"max_articles", 30}}},
      {"selfplay",
       {{"model", "sim-forecaster"}, {"max_retries", 4}, {"temperature", 1.0}}},
      {"forecast_models",
       Json::array({{{"tag", "fine_tune"}, {"kind", "toy"}, {"policy", "policy_true_outcome.json"}},
                    {{"tag", "control"}, {"kind", "toy"}, {"policy", "policy_randomized.json"}},
                    {{"tag", "base"}, {"kind", "toy"}, {"policy", "policy_init.json"}},
                    {{"tag", "simulated"}, {"kind", "chat"}, {"model", "sim-forecaster"}}})},
      {"dpo",
       {{"beta", 0.1},
        {"learning_rate", 5.0},
        {"epochs", 5},
        {"seed", 7},
        {"batch_size", 2},
        {"grad_accumulation", 4},
        {"optimizer", "sgd"}}},
      {"label_mode", "true_outcome"},
      {"seed", 7},
      {"concurrency", 4},
      {"retry", {{"max_attempts", 3}, {"initial_delay_ms", 10}, {"backoff_factor", 2.0}}},
      {"featurizer_dims", 512}};
}

}  // namespace

Json WriteSyntheticCorpus(const fs::path& dir, const SyntheticOptions& options) {
  const SyntheticWorld world = MakeSyntheticWorld(options);
  fs::create_directories(dir);
  WriteFileAtomic(dir / "questions.jsonl", ToJsonLines(world.records));
  const Json config_json = SyntheticConfigJson();
  WriteFileAtomic(dir / "config.json", config_json.dump(2) + "\n");

  PipelineConfig config = PipelineConfig::FromJson(config_json, dir);
  const fs::path scratch = dir / ".generate";
  fs::remove_all(scratch);
  config.work_dir = scratch;

  SimulatedChatEndpoint chat_sim(world);
  SimulatedNewsEndpoint news_sim(world);
  RecordingChatEndpoint chat(chat_sim, std::make_shared<TranscriptStore>(config.chat.transcripts));
  RecordingNewsEndpoint news(news_sim, std::make_shared<TranscriptStore>(config.news.transcripts));
  Pipeline pipeline(config);
  pipeline.SetChatEndpoint(&chat);
  pipeline.SetNewsEndpoint(&news);

  Json counts = Json::object();
  for (auto summary : {pipeline.Ingest(), pipeline.FetchNews(), pipeline.SelfPlay(),
                       pipeline.Forecast("simulated")}) {
    counts[summary.stage] = summary.counts;
  }
  fs::remove_all(scratch);
  return counts;
}

}  // namespace fdpo
