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

#ifndef FDPO_SELFPLAY_H_
#define FDPO_SELFPLAY_H_

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fdpo/date.h"
#include "fdpo/endpoint.h"
#include "fdpo/news_client.h"
#include "fdpo/question_store.h"

namespace fdpo {

enum class PromptStyle {
  kScratchpad,     // seven-step structured instructions
  kZeroShotThink,  // persona prompt for models that emit <think> blocks
};

const char* ToString(PromptStyle style);
PromptStyle PromptStyleFromString(std::string_view s);  // throws ConfigError
// Think-tag models (names containing "r1", "deepseek", "think" or "qwq") get
// the zero-shot prompt; everything else gets the scratchpad.
PromptStyle DefaultStyleForModel(std::string_view model_name);

struct PromptBundle {
  std::string title;
  std::string background;
  std::string resolution_criteria;
  Date today;
  Date close_date;
  NewsContext news;
  PromptStyle style = PromptStyle::kScratchpad;

  // Throws Error("temporal_leakage") if today > close_date.
  void Validate() const;
};

// today = min(close_date, resolution_date): the model never sees a date past
// the question's close.
PromptBundle MakeBundle(const Question& q, NewsContext news, PromptStyle style);

std::string RenderPrompt(const PromptBundle& bundle);

struct ReasoningTrace {
  std::string question_id;
  std::string raw_text;
  double probability = 0.0;
  int attempt_index = 0;
  PromptStyle style = PromptStyle::kScratchpad;
  bool truncated = false;

  Json ToJson() const;
  static ReasoningTrace FromJson(const Json& j);
};

struct GenerationConfig {
  std::string model;
  double temperature = 1.0;
  // Extra generations allowed after the first while looking for a differing
  // forecast. Parse failures count against this budget.
  int max_retries = 4;
  std::optional<int> max_tokens;
  RetryPolicy retry;
};

struct PairResult {
  enum class Status { kPair, kDropped, kFailed };
  Status status = Status::kFailed;
  std::optional<std::pair<ReasoningTrace, ReasoningTrace>> traces;
  int attempts = 0;
  std::string error;  // "generation_failed" detail when kFailed
};

const char* ToString(PairResult::Status status);

// Generates a first trace, then re-samples up to `max_retries` times until a
// trace with a different canonical probability appears. If none does, the
// question is dropped; if no generation parses (or the endpoint keeps
// failing) the result is kFailed.
PairResult GeneratePair(const Question& q, const PromptBundle& bundle,
                        ChatEndpoint& model, const GenerationConfig& config);

}  // namespace fdpo

#endif  // FDPO_SELFPLAY_H_
