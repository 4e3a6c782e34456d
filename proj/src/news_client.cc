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

#include "fdpo/news_client.h"

#include <algorithm>
#include <set>
#include <utility>

#include <spdlog/spdlog.h>

namespace fdpo {
namespace {

std::string StripListMarker(std::string line) {
  auto first = line.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  line.erase(0, first);
  // "1. foo", "2) foo", "- foo", "* foo"
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
    line.erase(0, i + 1);
  } else if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
    line.erase(0, 1);
  }
  first = line.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  line.erase(0, first);
  while (!line.empty() && (line.back() == ' ' || line.back() == '\t' ||
                           line.back() == '\r')) {
    line.pop_back();
  }
  if (line.size() >= 2 && line.front() == '"' && line.back() == '"') {
    line = line.substr(1, line.size() - 2);
  }
  return line;
}

bool MoreRecent(const NewsArticle& a, const NewsArticle& b) {
  if (a.published_at != b.published_at) return a.published_at > b.published_at;
  if (a.source != b.source) return a.source < b.source;
  return a.title < b.title;
}

void Warn(std::vector<std::string>* warnings, const char* code,
          const std::string& detail) {
  spdlog::warn("{}: {}", code, detail);
  if (warnings) warnings->push_back(code);
}

}  // namespace

RetrievalWindow GetRetrievalWindow(const Question& q) {
  return RetrievalWindow{q.resolution_date - std::chrono::days{kRetrievalDays},
                         q.resolution_date};
}

Json ArticleSummary::ToJson() const {
  return Json{{"source", source},
              {"title", title},
              {"published_at", FormatTimestamp(published_at)},
              {"text", text}};
}

ArticleSummary ArticleSummary::FromJson(const Json& j) {
  ArticleSummary s;
  s.source = j.value("source", std::string());
  s.title = RequireString(j, "title");
  s.text = RequireString(j, "text");
  const auto ts = ParseTimestamp(RequireString(j, "published_at"));
  if (!ts) throw Error("malformed_date", "published_at");
  s.published_at = *ts;
  return s;
}

Json NewsContext::ToJson() const {
  Json list = Json::array();
  for (const auto& s : summaries) list.push_back(s.ToJson());
  return Json{{"question_id", question_id},
              {"summaries", std::move(list)},
              {"window_start", window.start.ToString()},
              {"window_end", window.end.ToString()},
              {"warnings", warnings}};
}

NewsContext NewsContext::FromJson(const Json& j) {
  NewsContext c;
  c.question_id = RequireString(j, "question_id");
  for (const auto& s : j.at("summaries")) {
    c.summaries.push_back(ArticleSummary::FromJson(s));
  }
  c.window.start = Date::ParseOrThrow(RequireString(j, "window_start"));
  c.window.end = Date::ParseOrThrow(RequireString(j, "window_end"));
  if (auto it = j.find("warnings"); it != j.end()) {
    c.warnings = it->get<std::vector<std::string>>();
  }
  return c;
}

std::string QueryGenerationPrompt(const Question& q, std::size_t max_queries) {
  std::string prompt =
      "You are helping a forecaster research a question. Write between 1 and " +
      std::to_string(max_queries) +
      " short news search queries that would surface recent articles relevant "
      "to the question. Output one query per line and nothing else.\n\n";
  prompt += "Question: " + q.title + "\n";
  if (!q.background.empty()) prompt += "Background: " + q.background + "\n";
  return prompt;
}

std::string SummaryPrompt(const NewsArticle& article) {
  return "Summarize the following article in at most 3 sentences, preserving "
         "dates and numbers.\n\nTitle: " +
         article.title + "\nSource: " + article.source +
         "\nPublished: " + FormatTimestamp(article.published_at) + "\n\n" +
         article.body;
}

std::vector<std::string> BuildQueries(const Question& q, ChatEndpoint& model,
                                      const NewsOptions& options,
                                      std::vector<std::string>* warnings) {
  ChatRequest request;
  request.model = options.query_model;
  request.messages = {{"user", QueryGenerationPrompt(q, options.max_queries)}};
  request.temperature = 0.0;
  request.scope = q.id;

  std::string text;
  try {
    text = WithRetry(options.retry, [&] { return model.Complete(request); }).text;
  } catch (const EndpointError& e) {
    Warn(warnings, "news_query_generation_failed", q.id + ": " + e.what());
    return {q.title};
  }

  std::vector<std::string> queries;
  std::set<std::string> seen;
  std::size_t pos = 0;
  while (pos <= text.size() && queries.size() < options.max_queries) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    std::string line = StripListMarker(text.substr(pos, nl - pos));
    if (!line.empty() && seen.insert(line).second) queries.push_back(line);
    pos = nl + 1;
  }
  if (queries.empty()) return {q.title};
  return queries;
}

std::vector<NewsArticle> FetchArticles(const std::vector<std::string>& queries,
                                       const RetrievalWindow& window,
                                       NewsEndpoint& api,
                                       const NewsOptions& options,
                                       const std::string& scope,
                                       std::vector<std::string>* warnings) {
  std::vector<NewsArticle> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& text : queries) {
    NewsQuery query{.query = text,
                    .from = window.start,
                    .to = window.end,
                    .limit = options.per_query_limit,
                    .scope = scope};
    std::vector<NewsArticle> found;
    try {
      found = WithRetry(options.retry, [&] { return api.Search(query); });
    } catch (const EndpointError& e) {
      Warn(warnings, "news_fetch_failed", scope + " '" + text + "': " + e.what());
      continue;
    }
    for (auto& a : found) {
      if (!window.Contains(a.published_at)) continue;
      if (!seen.emplace(a.source, a.title).second) continue;
      out.push_back(std::move(a));
    }
  }
  std::stable_sort(out.begin(), out.end(), MoreRecent);
  if (out.size() > options.max_articles) out.resize(options.max_articles);
  return out;
}

NewsContext Summarize(const std::string& question_id,
                      const RetrievalWindow& window,
                      std::vector<NewsArticle> articles, ChatEndpoint& model,
                      const NewsOptions& options) {
  NewsContext context{.question_id = question_id, .window = window};
  std::stable_sort(articles.begin(), articles.end(), MoreRecent);
  if (articles.size() > kMaxSummaries) articles.resize(kMaxSummaries);

  std::vector<ArticleSummary> summaries;
  try {
    for (const auto& a : articles) {
      ChatRequest request;
      request.model = options.summary_model;
      request.messages = {{"user", SummaryPrompt(a)}};
      request.temperature = 0.0;
      request.scope = question_id;
      auto response =
          WithRetry(options.retry, [&] { return model.Complete(request); });
      if (response.text.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw EndpointError("empty_summary", a.title, /*transient=*/false);
      }
      summaries.push_back({a.source, a.title, a.published_at, response.text});
    }
  } catch (const EndpointError& e) {
    Warn(&context.warnings, "summarization_failed", question_id + ": " + e.what());
    summaries.clear();
    for (const auto& a : articles) {
      summaries.push_back({a.source, a.title, a.published_at, a.title});
    }
  }
  context.summaries = std::move(summaries);
  return context;
}

NewsContext CollectNews(const Question& q, ChatEndpoint& model,
                        NewsEndpoint& api, const NewsOptions& options) {
  std::vector<std::string> warnings;
  const RetrievalWindow window = GetRetrievalWindow(q);
  auto queries = BuildQueries(q, model, options, &warnings);
  auto articles = FetchArticles(queries, window, api, options, q.id, &warnings);
  NewsContext context = Summarize(q.id, window, std::move(articles), model, options);
  warnings.insert(warnings.end(), context.warnings.begin(), context.warnings.end());
  context.warnings = std::move(warnings);
  return context;
}

}  // namespace fdpo
