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

#ifndef FDPO_ENDPOINT_H_
#define FDPO_ENDPOINT_H_

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "fdpo/date.h"
#include "fdpo/error.h"
#include "fdpo/io.h"

namespace fdpo {

// Raised by endpoints. Transient failures (timeouts, 429, 5xx) are retried by
// WithRetry; permanent ones are not.
class EndpointError : public Error {
 public:
  EndpointError(std::string code, const std::string& detail, bool transient)
      : Error(std::move(code), detail), transient_(transient) {}
  bool transient() const { return transient_; }

 private:
  bool transient_;
};

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 1.0;
  // Distinguishes repeated samples of an identical prompt so that recorded
  // transcripts can replay each one. Not sent over the wire.
  int sample_index = 0;
  std::optional<int> max_tokens;
  // Routes transcripts to a per-question file. Not part of the request hash.
  std::string scope;

  // The wire-relevant fields, canonically serialized.
  Json ToJson() const;
  // SHA-256 of ToJson(); the replay lookup key.
  std::string Key() const;
};

struct ChatResponse {
  std::string text;
  bool truncated = false;  // generation stopped at the token budget

  Json ToJson() const;
  static ChatResponse FromJson(const Json& j);
};

class ChatEndpoint {
 public:
  virtual ~ChatEndpoint() = default;
  virtual ChatResponse Complete(const ChatRequest& request) = 0;
};

struct NewsArticle {
  std::string source;
  Timestamp published_at;
  std::string title;
  std::string body;

  Json ToJson() const;
  static NewsArticle FromJson(const Json& j);
};

struct NewsQuery {
  std::string query;
  Date from;
  Date to;
  std::size_t limit = 20;
  std::string scope;

  Json ToJson() const;
  std::string Key() const;
};

class NewsEndpoint {
 public:
  virtual ~NewsEndpoint() = default;
  virtual std::vector<NewsArticle> Search(const NewsQuery& query) = 0;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_delay{1000};
  double backoff_factor = 2.0;
  // Replaceable so tests run without wall-clock sleeps.
  std::function<void(std::chrono::milliseconds)> sleep;

  void Sleep(std::chrono::milliseconds d) const;
};

// Calls `fn` until it succeeds, a permanent EndpointError is thrown, or
// max_attempts is exhausted; delays double (by backoff_factor) between tries.
template <typename Fn>
auto WithRetry(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
  auto delay = policy.initial_delay;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const EndpointError& e) {
      if (!e.transient() || attempt >= policy.max_attempts) throw;
    }
    policy.Sleep(delay);
    delay = std::chrono::milliseconds(static_cast<long long>(
        static_cast<double>(delay.count()) * policy.backoff_factor));
  }
}

// A directory of per-scope JSON files, each mapping request key -> response
// body. Thread-safe; files are rewritten atomically on every Put.
class TranscriptStore {
 public:
  explicit TranscriptStore(std::filesystem::path dir);

  std::optional<Json> Get(const std::string& scope, const std::string& key);
  void Put(const std::string& scope, const std::string& key, const Json& body);

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path FileFor(const std::string& scope) const;
  std::map<std::string, Json>& LoadLocked(const std::string& scope);

  std::filesystem::path dir_;
  std::mutex mu_;
  std::map<std::string, std::map<std::string, Json>> cache_;
};

// Serves responses from a TranscriptStore; a missing key is a permanent
// "replay_miss" error.
class ReplayChatEndpoint : public ChatEndpoint {
 public:
  explicit ReplayChatEndpoint(std::shared_ptr<TranscriptStore> store)
      : store_(std::move(store)) {}
  ChatResponse Complete(const ChatRequest& request) override;

 private:
  std::shared_ptr<TranscriptStore> store_;
};

// Forwards to `inner` and records each successful response.
class RecordingChatEndpoint : public ChatEndpoint {
 public:
  RecordingChatEndpoint(ChatEndpoint& inner,
                        std::shared_ptr<TranscriptStore> store)
      : inner_(inner), store_(std::move(store)) {}
  ChatResponse Complete(const ChatRequest& request) override;

 private:
  ChatEndpoint& inner_;
  std::shared_ptr<TranscriptStore> store_;
};

class ReplayNewsEndpoint : public NewsEndpoint {
 public:
  explicit ReplayNewsEndpoint(std::shared_ptr<TranscriptStore> store)
      : store_(std::move(store)) {}
  std::vector<NewsArticle> Search(const NewsQuery& query) override;

 private:
  std::shared_ptr<TranscriptStore> store_;
};

class RecordingNewsEndpoint : public NewsEndpoint {
 public:
  RecordingNewsEndpoint(NewsEndpoint& inner,
                        std::shared_ptr<TranscriptStore> store)
      : inner_(inner), store_(std::move(store)) {}
  std::vector<NewsArticle> Search(const NewsQuery& query) override;

 private:
  NewsEndpoint& inner_;
  std::shared_ptr<TranscriptStore> store_;
};

struct HttpChatConfig {
  std::string base_url;  // e.g. "http://localhost:8000"
  std::string path = "/v1/chat/completions";
  std::string api_key;   // sent as "Authorization: Bearer <key>" if set
  std::chrono::seconds timeout{120};
};

// OpenAI-compatible chat-completion client.
class HttpChatEndpoint : public ChatEndpoint {
 public:
  explicit HttpChatEndpoint(HttpChatConfig config);
  ChatResponse Complete(const ChatRequest& request) override;

 private:
  HttpChatConfig config_;
};

struct HttpNewsConfig {
  std::string base_url;
  std::string path = "/v2/search";
  std::string api_key;
  std::string key_header = "x-api-token";
  std::chrono::seconds timeout{60};
};

// Generic search client: GET path?q=..&from=..&to=..&page_size=.., expecting
// {"articles": [{"source", "published_at", "title", "body"}]}.
class HttpNewsEndpoint : public NewsEndpoint {
 public:
  explicit HttpNewsEndpoint(HttpNewsConfig config);
  std::vector<NewsArticle> Search(const NewsQuery& query) override;

 private:
  HttpNewsConfig config_;
};

// Bounds the number of in-flight endpoint calls across pipeline stages.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(std::ptrdiff_t limit) : sem_(limit) {}

  class Permit {
   public:
    explicit Permit(ConcurrencyLimiter& l) : l_(&l) { l_->sem_.acquire(); }
    ~Permit() {
      if (l_) l_->sem_.release();
    }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

   private:
    ConcurrencyLimiter* l_;
  };

 private:
  std::counting_semaphore<> sem_;
};

// Wraps any chat endpoint so each call holds a limiter permit.
class LimitedChatEndpoint : public ChatEndpoint {
 public:
  LimitedChatEndpoint(ChatEndpoint& inner, ConcurrencyLimiter& limiter)
      : inner_(inner), limiter_(limiter) {}
  ChatResponse Complete(const ChatRequest& request) override {
    ConcurrencyLimiter::Permit permit(limiter_);
    return inner_.Complete(request);
  }

 private:
  ChatEndpoint& inner_;
  ConcurrencyLimiter& limiter_;
};

class LimitedNewsEndpoint : public NewsEndpoint {
 public:
  LimitedNewsEndpoint(NewsEndpoint& inner, ConcurrencyLimiter& limiter)
      : inner_(inner), limiter_(limiter) {}
  std::vector<NewsArticle> Search(const NewsQuery& query) override {
    ConcurrencyLimiter::Permit permit(limiter_);
    return inner_.Search(query);
  }

 private:
  NewsEndpoint& inner_;
  ConcurrencyLimiter& limiter_;
};

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
// written to per-index slots by the caller; the first exception is rethrown.
void ParallelFor(std::size_t n, std::size_t workers,
                 const std::function<void(std::size_t)>& fn);

}  // namespace fdpo

#endif  // FDPO_ENDPOINT_H_
