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

#include "httplib.h"

#include "fdpo/endpoint.h"

namespace fdpo {
namespace {

bool TransientStatus(int status) { return status == 429 || status >= 500; }

httplib::Client MakeClient(const std::string& base_url,
                           std::chrono::seconds timeout) {
  httplib::Client client(base_url);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  return client;
}

}  // namespace

HttpChatEndpoint::HttpChatEndpoint(HttpChatConfig config)
    : config_(std::move(config)) {
  if (config_.base_url.empty()) {
    throw ConfigError("missing_base_url", "chat endpoint");
  }
}

ChatResponse HttpChatEndpoint::Complete(const ChatRequest& request) {
  Json body = request.ToJson();
  body.erase("sample_index");
  auto client = MakeClient(config_.base_url, config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.api_key);
  }
  auto res = client.Post(config_.path, headers, body.dump(), "application/json");
  if (!res) {
    throw EndpointError("chat_transport_error",
                        httplib::to_string(res.error()), /*transient=*/true);
  }
  if (res->status != 200) {
    throw EndpointError("chat_http_" + std::to_string(res->status),
                        res->body.substr(0, 512), TransientStatus(res->status));
  }
  try {
    const Json j = Json::parse(res->body);
    const Json& choice = j.at("choices").at(0);
    ChatResponse out;
    const Json& content = choice.at("message").at("content");
    out.text = content.is_string() ? content.get<std::string>() : std::string();
    out.truncated = choice.value("finish_reason", Json()).is_string() &&
                    choice.at("finish_reason").get<std::string>() == "length";
    return out;
  } catch (const Json::exception& e) {
    throw EndpointError("chat_bad_response", e.what(), /*transient=*/false);
  }
}

HttpNewsEndpoint::HttpNewsEndpoint(HttpNewsConfig config)
    : config_(std::move(config)) {
  if (config_.base_url.empty()) {
    throw ConfigError("missing_base_url", "news endpoint");
  }
}

std::vector<NewsArticle> HttpNewsEndpoint::Search(const NewsQuery& query) {
  auto client = MakeClient(config_.base_url, config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace(config_.key_header, config_.api_key);
  httplib::Params params{{"q", query.query},
                         {"from", query.from.ToString()},
                         {"to", query.to.ToString()},
                         {"page_size", std::to_string(query.limit)}};
  auto res = client.Get(config_.path, params, headers);
  if (!res) {
    throw EndpointError("news_transport_error", httplib::to_string(res.error()),
                        /*transient=*/true);
  }
  if (res->status != 200) {
    throw EndpointError("news_http_" + std::to_string(res->status),
                        res->body.substr(0, 512), TransientStatus(res->status));
  }
  std::vector<NewsArticle> out;
  try {
    const Json j = Json::parse(res->body);
    auto it = j.find("articles");
    if (it == j.end() || it->is_null()) return out;
    for (const auto& a : *it) out.push_back(NewsArticle::FromJson(a));
  } catch (const Json::exception& e) {
    throw EndpointError("news_bad_response", e.what(), /*transient=*/false);
  } catch (const Error& e) {
    throw EndpointError("news_bad_response", e.what(), /*transient=*/false);
  }
  return out;
}

}  // namespace fdpo
