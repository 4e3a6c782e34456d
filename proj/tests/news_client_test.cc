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

#include "fdpo/news_client.h"
#include "test_support.h"

namespace fdpo {
namespace {

using testing::FakeChat;
using testing::FakeNews;
using testing::MakeArticle;
using testing::MakeQuestion;

NewsOptions FastOptions() {
  NewsOptions o;
  o.retry = testing::InstantRetry();
  return o;
}

TEST(RetrievalWindowTest, FourteenDaysBeforeResolution) {
  struct Case {
    const char* resolution;
    const char* start;
  } cases[] = {{"2024-12-01", "2024-11-17"},
               {"2024-03-14", "2024-02-29"},
               {"2025-01-01", "2024-12-18"}};
  for (const auto& c : cases) {
    const auto w = GetRetrievalWindow(MakeQuestion("q", c.resolution));
    EXPECT_EQ(w.start.ToString(), c.start);
    EXPECT_EQ(w.end.ToString(), c.resolution);
  }
}

TEST(RetrievalWindowTest, HalfOpenOnResolutionDay) {
  const auto w = GetRetrievalWindow(MakeQuestion("q", "2024-12-01"));
  EXPECT_TRUE(w.Contains(*ParseTimestamp("2024-11-17T00:00:00Z")));
  EXPECT_TRUE(w.Contains(*ParseTimestamp("2024-11-30T23:59:59Z")));
  EXPECT_FALSE(w.Contains(*ParseTimestamp("2024-12-01T00:00:00Z")));
  EXPECT_FALSE(w.Contains(*ParseTimestamp("2024-11-16T23:59:59Z")));
}

TEST(BuildQueriesTest, ReplaysTranscriptVerbatim) {
  Question q = MakeQuestion("modi", "2024-06-04");
  q.title = "Will Modi win reelection?";
  FakeChat chat(testing::Script({"Modi reelection polls\nBJP seat projections\n"}));
  auto queries = BuildQueries(q, chat, FastOptions());
  EXPECT_EQ(queries, (std::vector<std::string>{"Modi reelection polls", "BJP seat projections"}));
  ASSERT_EQ(chat.calls(), 1u);
  EXPECT_EQ(chat.requests()[0].temperature, 0.0);
  EXPECT_NE(chat.requests()[0].messages[0].content.find(q.title), std::string::npos);
}

TEST(BuildQueriesTest, StripsMarkersDeduplicatesAndCaps) {
  Question q = MakeQuestion("q", "2024-06-04");
  FakeChat chat(testing::Script({"1. alpha\n2) \"beta\"\n- alpha\n* gamma\n\nd\ne\nf\ng"}));
  auto queries = BuildQueries(q, chat, FastOptions());
  EXPECT_EQ(queries, (std::vector<std::string>{"alpha", "beta", "gamma", "d", "e"}));
}

TEST(BuildQueriesTest, EmptyResponseFallsBackToTitle) {
  Question q = MakeQuestion("q", "2024-06-04");
  FakeChat chat(testing::Script({"  \n\n"}));
  EXPECT_EQ(BuildQueries(q, chat, FastOptions()), std::vector<std::string>{q.title});
}

TEST(BuildQueriesTest, TimeoutsFallBackWithWarning) {
  Question q = MakeQuestion("q", "2024-06-04");
  FakeChat chat([](const ChatRequest&) -> ChatResponse {
    throw EndpointError("chat_transport_error", "timeout", true);
  });
  std::vector<std::string> warnings;
  EXPECT_EQ(BuildQueries(q, chat, FastOptions(), &warnings),
            std::vector<std::string>{q.title});
  EXPECT_EQ(chat.calls(), 3u);
  EXPECT_EQ(warnings, std::vector<std::string>{"news_query_generation_failed"});
}

TEST(FetchArticlesTest, DeduplicatesAcrossQueriesAndFiltersWindow) {
  const auto window = GetRetrievalWindow(MakeQuestion("q", "2024-12-01"));
  FakeNews news([](const NewsQuery& query) {
    std::vector<NewsArticle> out = {
        MakeArticle("Wire", "2024-11-20T10:00:00Z", "Shared story"),
        MakeArticle("Wire", "2024-12-01T09:00:00Z", "Resolution day story"),
        MakeArticle("Wire", "2024-11-10T09:00:00Z", "Old story")};
    out.push_back(MakeArticle("Post", "2024-11-25T10:00:00Z", "Only " + query.query));
    return out;
  });
  auto articles = FetchArticles({"a", "b"}, window, news, FastOptions(), "q");
  ASSERT_EQ(articles.size(), 3u);
  EXPECT_EQ(articles[0].title, "Only a");  // most recent first, ties stable
  EXPECT_EQ(articles[1].title, "Only b");
  EXPECT_EQ(articles[2].title, "Shared story");
  for (const auto& a : articles) EXPECT_TRUE(window.Contains(a.published_at));
  auto queries = news.queries();
  ASSERT_EQ(queries.size(), 2u);
  EXPECT_EQ(queries[0].from, window.start);
  EXPECT_EQ(queries[0].to, window.end);
  EXPECT_EQ(queries[0].scope, "q");
}

TEST(FetchArticlesTest, EmptyResultsAndCap) {
  const auto window = GetRetrievalWindow(MakeQuestion("q", "2024-12-01"));
  FakeNews none([](const NewsQuery&) { return std::vector<NewsArticle>{}; });
  EXPECT_TRUE(FetchArticles({"a"}, window, none, FastOptions(), "q").empty());

  FakeNews many([](const NewsQuery&) {
    std::vector<NewsArticle> out;
    for (int i = 0; i < 40; ++i) {
      out.push_back(MakeArticle("S", "2024-11-2" + std::to_string(i % 10) + "T00:00:00Z",
                                "t" + std::to_string(i)));
    }
    return out;
  });
  NewsOptions o = FastOptions();
  o.max_articles = 12;
  EXPECT_EQ(FetchArticles({"a"}, window, many, o, "q").size(), 12u);
}

TEST(FetchArticlesTest, FailedQueryIsSkipped) {
  const auto window = GetRetrievalWindow(MakeQuestion("q", "2024-12-01"));
  FakeNews flaky([](const NewsQuery& query) -> std::vector<NewsArticle> {
    if (query.query == "bad") throw EndpointError("news_http_503", "down", true);
    return {MakeArticle("S", "2024-11-20T00:00:00Z", "good")};
  });
  std::vector<std::string> warnings;
  auto articles = FetchArticles({"bad", "good"}, window, flaky, FastOptions(), "q", &warnings);
  EXPECT_EQ(articles.size(), 1u);
  EXPECT_EQ(warnings, std::vector<std::string>{"news_fetch_failed"});
  EXPECT_EQ(flaky.queries().size(), 4u);  // three attempts, then the good query
}

std::vector<NewsArticle> Articles(int n) {
  std::vector<NewsArticle> out;
  for (int i = 0; i < n; ++i) {
    char when[32];
    std::snprintf(when, sizeof(when), "2024-11-%02dT12:00:00Z", 10 + i);
    out.push_back(MakeArticle("S", when, "a" + std::to_string(i)));
  }
  return out;
}

TEST(SummarizeTest, EmptyInput) {
  FakeChat chat(testing::Script({"x"}));
  const auto window = GetRetrievalWindow(MakeQuestion("q", "2024-12-01"));
  auto ctx = Summarize("q", window, {}, chat, FastOptions());
  EXPECT_TRUE(ctx.summaries.empty());
  EXPECT_EQ(chat.calls(), 0u);
}

TEST(SummarizeTest, CapsAtTenMostRecentFirst) {
  FakeChat chat([](const ChatRequest& r) {
    const auto& p = r.messages[0].content;
    const auto pos = p.find("Title: ") + 7;
    return ChatResponse{"summary of " + p.substr(pos, p.find('\n', pos) - pos)};
  });
  const auto window = GetRetrievalWindow(MakeQuestion("q", "2024-12-01"));
  auto ctx = Summarize("q", window, Articles(14), chat, FastOptions());
  ASSERT_EQ(ctx.summaries.size(), 10u);
  EXPECT_EQ(ctx.summaries.front().title, "a13");
  EXPECT_EQ(ctx.summaries.back().title, "a4");
  EXPECT_EQ(ctx.summaries.front().text, "summary of a13");
  for (std::size_t i = 1; i < ctx.summaries.size(); ++i) {
    EXPECT_GT(ctx.summaries[i - 1].published_at, ctx.summaries[i].published_at);
  }
  EXPECT_TRUE(chat.requests()[0].messages[0].content.starts_with(
      "Summarize the following article in at most 3 sentences"));
}

TEST(SummarizeTest, ReplayFidelityAndIdempotence) {
  testing::TempDir dir;
  FakeChat live(testing::Script({"first", "second", "third"}));
  auto store = std::make_shared<TranscriptStore>(dir.path());
  RecordingChatEndpoint recorder(live, store);
  const auto window = GetRetrievalWindow(MakeQuestion("q", "2024-12-01"));
  auto recorded = Summarize("q", window, Articles(3), recorder, FastOptions());
  ReplayChatEndpoint replay(std::make_shared<TranscriptStore>(dir.path()));
  auto a = Summarize("q", window, Articles(3), replay, FastOptions());
  auto b = Summarize("q", window, Articles(3), replay, FastOptions());
  ASSERT_EQ(a.summaries.size(), 3u);
  EXPECT_EQ(a.ToJson(), recorded.ToJson());
  EXPECT_EQ(a.ToJson(), b.ToJson());
  EXPECT_EQ(a.summaries[0].text, "first");
}

TEST(SummarizeTest, FailureDegradesToTitles) {
  FakeChat chat([](const ChatRequest&) -> ChatResponse {
    throw EndpointError("chat_http_500", "down", true);
  });
  const auto window = GetRetrievalWindow(MakeQuestion("q", "2024-12-01"));
  auto ctx = Summarize("q", window, Articles(3), chat, FastOptions());
  ASSERT_EQ(ctx.summaries.size(), 3u);
  EXPECT_EQ(ctx.summaries[0].text, ctx.summaries[0].title);
  EXPECT_EQ(ctx.warnings, std::vector<std::string>{"summarization_failed"});
}

TEST(CollectNewsTest, NoSummaryPostdatesResolution) {
  Question q = MakeQuestion("q", "2024-12-01");
  FakeChat chat([](const ChatRequest& r) {
    if (r.messages[0].content.starts_with("You are helping")) return ChatResponse{"one\ntwo"};
    return ChatResponse{"s"};
  });
  FakeNews news([](const NewsQuery&) {
    return std::vector<NewsArticle>{MakeArticle("S", "2024-11-30T23:00:00Z", "in"),
                                    MakeArticle("S", "2024-12-01T00:00:00Z", "on"),
                                    MakeArticle("S", "2024-12-03T00:00:00Z", "after")};
  });
  auto ctx = CollectNews(q, chat, news, FastOptions());
  ASSERT_EQ(ctx.summaries.size(), 1u);
  for (const auto& s : ctx.summaries) {
    EXPECT_LT(s.published_at, StartOfDay(q.resolution_date));
  }
  EXPECT_TRUE(ctx.warnings.empty());
  EXPECT_EQ(NewsContext::FromJson(ctx.ToJson()).ToJson(), ctx.ToJson());
}

}  // namespace
}  // namespace fdpo
