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

#include "fdpo/endpoint.h"

#include <atomic>
#include <exception>
#include <thread>

namespace fdpo {

Json ChatRequest::ToJson() const {
  Json messages_json = Json::array();
  for (const auto& m : messages) {
    messages_json.push_back({{"role", m.role}, {"content", m.content}});
  }
  Json j{{"model", model},
         {"messages", std::move(messages_json)},
         {"temperature", temperature},
         {"sample_index", sample_index}};
  if (max_tokens) j["max_tokens"] = *max_tokens;
  return j;
}

std::string ChatRequest::Key() const { return Sha256Hex(CanonicalDump(ToJson())); }

Json ChatResponse::ToJson() const {
  return Json{{"text", text}, {"finish_reason", truncated ? "length" : "stop"}};
}

ChatResponse ChatResponse::FromJson(const Json& j) {
  ChatResponse r;
  r.text = RequireString(j, "text");
  r.truncated = j.value("finish_reason", std::string("stop")) == "length";
  return r;
}

Json NewsArticle::ToJson() const {
  return Json{{"source", source},
              {"published_at", FormatTimestamp(published_at)},
              {"title", title},
              {"body", body}};
}

NewsArticle NewsArticle::FromJson(const Json& j) {
  NewsArticle a;
  a.source = j.value("source", std::string());
  a.title = RequireString(j, "title");
  a.body = j.value("body", std::string());
  const std::string ts = RequireString(j, "published_at");
  auto parsed = ParseTimestamp(ts);
  if (!parsed) throw Error("malformed_date", ts);
  a.published_at = *parsed;
  return a;
}

Json NewsQuery::ToJson() const {
  return Json{{"q", query},
              {"from", from.ToString()},
              {"to", to.ToString()},
              {"limit", limit}};
}

std::string NewsQuery::Key() const { return Sha256Hex(CanonicalDump(ToJson())); }

void RetryPolicy::Sleep(std::chrono::milliseconds d) const {
  if (sleep) {
    sleep(d);
  } else {
    std::this_thread::sleep_for(d);
  }
}

TranscriptStore::TranscriptStore(std::filesystem::path dir)
    : dir_(std::move(dir)) {}

std::filesystem::path TranscriptStore::FileFor(const std::string& scope) const {
  std::string name = scope.empty() ? "_global" : scope;
  bool safe = name.size() < 128;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
    if (!ok) safe = false;
  }
  if (!safe || name.front() == '.') name = "h_" + Sha256Hex(scope).substr(0, 32);
  return dir_ / (name + ".json");
}

std::map<std::string, Json>& TranscriptStore::LoadLocked(
    const std::string& scope) {
  auto it = cache_.find(scope);
  if (it != cache_.end()) return it->second;
  auto& entries = cache_[scope];
  const auto path = FileFor(scope);
  if (std::filesystem::exists(path)) {
    Json j;
    try {
      j = Json::parse(ReadFile(path));
    } catch (const Json::parse_error& e) {
      throw Error("malformed_transcript", path.string() + ": " + e.what());
    }
    for (auto& [key, body] : j.items()) entries.emplace(key, body);
  }
  return entries;
}

std::optional<Json> TranscriptStore::Get(const std::string& scope,
                                         const std::string& key) {
  std::lock_guard lock(mu_);
  auto& entries = LoadLocked(scope);
  auto it = entries.find(key);
  if (it == entries.end()) return std::nullopt;
  return it->second;
}

void TranscriptStore::Put(const std::string& scope, const std::string& key,
                          const Json& body) {
  std::lock_guard lock(mu_);
  auto& entries = LoadLocked(scope);
  entries[key] = body;
  Json j = Json::object();
  for (const auto& [k, v] : entries) j[k] = v;
  WriteFileAtomic(FileFor(scope), j.dump(1) + "\n");
}

ChatResponse ReplayChatEndpoint::Complete(const ChatRequest& request) {
  auto body = store_->Get(request.scope, request.Key());
  if (!body) {
    throw EndpointError("replay_miss",
                        "no recorded chat response for scope '" +
                            request.scope + "'",
                        /*transient=*/false);
  }
  return ChatResponse::FromJson(*body);
}

ChatResponse RecordingChatEndpoint::Complete(const ChatRequest& request) {
  ChatResponse response = inner_.Complete(request);
  store_->Put(request.scope, request.Key(), response.ToJson());
  return response;
}

std::vector<NewsArticle> ReplayNewsEndpoint::Search(const NewsQuery& query) {
  auto body = store_->Get(query.scope, query.Key());
  if (!body) {
    throw EndpointError("replay_miss",
                        "no recorded news response for scope '" + query.scope +
                            "'",
                        /*transient=*/false);
  }
  std::vector<NewsArticle> out;
  for (const auto& a : body->at("articles")) out.push_back(NewsArticle::FromJson(a));
  return out;
}

std::vector<NewsArticle> RecordingNewsEndpoint::Search(const NewsQuery& query) {
  auto articles = inner_.Search(query);
  Json list = Json::array();
  for (const auto& a : articles) list.push_back(a.ToJson());
  store_->Put(query.scope, query.Key(), Json{{"articles", std::move(list)}});
  return articles;
}

void ParallelFor(std::size_t n, std::size_t workers,
                 const std::function<void(std::size_t)>& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::jthread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        {
          std::lock_guard lock(error_mu);
          if (first_error) return;
        }
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  threads.clear();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace fdpo
