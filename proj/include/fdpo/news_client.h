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

#ifndef FDPO_NEWS_CLIENT_H_
#define FDPO_NEWS_CLIENT_H_

#include <cstddef>
#include <string>
#include <vector>

#include "fdpo/date.h"
#include "fdpo/endpoint.h"
#include "fdpo/question_store.h"

namespace fdpo {

inline constexpr std::size_t kMaxSummaries = 10;
inline constexpr int kRetrievalDays = 14;

// Articles are accepted when start <= published_at < end, both taken at
// midnight UTC, so nothing published on the resolution date itself leaks in.
struct RetrievalWindow {
  Date start;
  Date end;

  bool Contains(Timestamp t) const {
    return StartOfDay(start) <= t && t < StartOfDay(end);
  }
};

// end = resolution_date, start = end - 14 days.
RetrievalWindow GetRetrievalWindow(const Question& q);

struct ArticleSummary {
  std::string source;
  std::string title;
  Timestamp published_at;
  std::string text;

  Json ToJson() const;
  static ArticleSummary FromJson(const Json& j);
};

struct NewsContext {
  std::string question_id;
  std::vector<ArticleSummary> summaries;  // most recent first, <= 10
  RetrievalWindow window;
  std::vector<std::string> warnings;      // error codes of degraded steps

  Json ToJson() const;
  static NewsContext FromJson(const Json& j);
};

struct NewsOptions {
  std::string query_model = "gpt-4o";
  std::string summary_model = "gpt-4o";
  std::size_t max_queries = 5;
  std::size_t per_query_limit = 20;
  std::size_t max_articles = 30;
  RetryPolicy retry;
};

std::string QueryGenerationPrompt(const Question& q, std::size_t max_queries);
std::string SummaryPrompt(const NewsArticle& article);

// Asks the model for search queries, one per line. Falls back to the question
// title (and appends "news_query_generation_failed" to `warnings` on endpoint
// failure) when the response yields no usable query.
std::vector<std::string> BuildQueries(const Question& q, ChatEndpoint& model,
                                      const NewsOptions& options,
                                      std::vector<std::string>* warnings = nullptr);

// Runs every query, keeps articles inside `window`, drops duplicates by
// (source, title) and keeps the `max_articles` most recent. A query that fails
// after retries is skipped with a "news_fetch_failed" warning.
std::vector<NewsArticle> FetchArticles(const std::vector<std::string>& queries,
                                       const RetrievalWindow& window,
                                       NewsEndpoint& api,
                                       const NewsOptions& options,
                                       const std::string& scope,
                                       std::vector<std::string>* warnings = nullptr);

// Summarizes the 10 most recent articles. On endpoint failure the context
// degrades to raw titles with a "summarization_failed" warning.
NewsContext Summarize(const std::string& question_id,
                      const RetrievalWindow& window,
                      std::vector<NewsArticle> articles, ChatEndpoint& model,
                      const NewsOptions& options);

// The full chain for one question: window, queries, fetch, summarize.
NewsContext CollectNews(const Question& q, ChatEndpoint& model,
                        NewsEndpoint& api, const NewsOptions& options);

}  // namespace fdpo

#endif  // FDPO_NEWS_CLIENT_H_
