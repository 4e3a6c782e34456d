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

#include "fdpo/selfplay.h"

#include <algorithm>
#include <array>

#include <spdlog/spdlog.h>

#include "fdpo/error.h"
#include "fdpo/forecast_parser.h"

namespace fdpo {
namespace {

constexpr std::array<std::string_view, 7> kScratchpadSteps = {
    "Given the above question, rephrase and expand it to help you do better "
    "answering. Maintain all information in the original question.\n"
    "{ Insert rephrased and expanded question. }",
    "Using your knowledge of the world and topic, as well as the information "
    "provided, provide a few reasons why the answer might be no. Rate the "
    "strength of each reason.\n{ Insert your thoughts }",
    "Using your knowledge of the world and topic, as well as the information "
    "provided, provide a few reasons why the answer might be yes. Rate the "
    "strength of each reason.\n{ Insert your thoughts }",
    "Aggregate your considerations. Think like a superforecaster (e.g. Nate "
    "Silver).\n{ Insert your aggregated considerations }",
    "Output an initial probability (prediction) given steps 1-4.\n"
    "{ Insert initial probability. }",
    "Evaluate whether your calculated probability is excessively confident or "
    "not confident enough. Also, consider anything else that might affect the "
    "forecast that you did not before consider (e.g. base rate of the "
    "event).\n{ Insert your thoughts }",
    "Output your final prediction (a number between 0 and 1) with an asterisk "
    "at the beginning and end of the decimal.\n{ Insert your answer }",
};

constexpr std::string_view kPersona =
    "You are an expert superforecaster, familiar with Structured Analytic "
    "Techniques as well as Superforecasting by Philip Tetlock and related "
    "work. Predict the probability that the following question will be "
    "resolved as true/yes. You MUST give a probability estimate between 0 and "
    "1 UNDER ALL CIRCUMSTANCES.";

constexpr std::string_view kFinalAnswerInstruction =
    "Output your final prediction (a number between 0 and 1) with an asterisk "
    "at the beginning and end of the decimal (Ex: *<probability>*).\n"
    "{ Insert your answer }";

constexpr std::string_view kNoNews = "No news available.";

std::string QuestionBlock(const PromptBundle& b) {
  std::string out;
  out += "Question: " + b.title + "\n";
  out += "Question Background: " +
         (b.background.empty() ? std::string("(none)") : b.background) + "\n";
  out += "Resolution Criteria: " +
         (b.resolution_criteria.empty() ? std::string("(none)")
                                        : b.resolution_criteria) +
         "\n";
  out += "Today's Date: " + b.today.ToString() + "\n";
  out += "Question Close Date: " + b.close_date.ToString() + "\n";
  out += "News Summaries:\n";
  if (b.news.summaries.empty()) {
    out += std::string(kNoNews) + "\n";
  } else {
    int n = 1;
    for (const auto& s : b.news.summaries) {
      out += std::to_string(n++) + ". [" +
             Date(std::chrono::floor<std::chrono::days>(s.published_at))
                 .ToString() +
             "] " + s.title;
      if (!s.source.empty()) out += " (" + s.source + ")";
      out += ": " + s.text + "\n";
    }
  }
  return out;
}

}  // namespace

const char* ToString(PromptStyle style) {
  switch (style) {
    case PromptStyle::kScratchpad:
      return "scratchpad";
    case PromptStyle::kZeroShotThink:
      return "zero_shot_think";
  }
  return "unknown";
}

PromptStyle PromptStyleFromString(std::string_view s) {
  if (s == "scratchpad") return PromptStyle::kScratchpad;
  if (s == "zero_shot_think") return PromptStyle::kZeroShotThink;
  throw ConfigError("invalid_prompt_style", std::string(s));
}

PromptStyle DefaultStyleForModel(std::string_view model_name) {
  std::string lower(model_name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  for (std::string_view marker : {"r1", "deepseek", "think", "qwq"}) {
    if (lower.find(marker) != std::string::npos) {
      return PromptStyle::kZeroShotThink;
    }
  }
  return PromptStyle::kScratchpad;
}

void PromptBundle::Validate() const {
  if (today > close_date) {
    throw Error("temporal_leakage", "today " + today.ToString() +
                                        " is after close date " +
                                        close_date.ToString());
  }
}

PromptBundle MakeBundle(const Question& q, NewsContext news, PromptStyle style) {
  return PromptBundle{.title = q.title,
                      .background = q.background,
                      .resolution_criteria = q.resolution_criteria,
                      .today = std::min(q.close_date, q.resolution_date),
                      .close_date = q.close_date,
                      .news = std::move(news),
                      .style = style};
}

std::string RenderPrompt(const PromptBundle& b) {
  b.Validate();
  std::string out;
  if (b.style == PromptStyle::kScratchpad) {
    out += QuestionBlock(b);
    out += "\nInstructions:\n";
    for (std::size_t i = 0; i < kScratchpadSteps.size(); ++i) {
      out += std::to_string(i + 1) + ". " + std::string(kScratchpadSteps[i]) +
             "\n";
    }
  } else {
    out += std::string(kPersona) + "\n\n";
    out += QuestionBlock(b);
    out += "\n" + std::string(kFinalAnswerInstruction) + "\n";
  }
  return out;
}

Json ReasoningTrace::ToJson() const {
  return Json{{"question_id", question_id},
              {"attempt_index", attempt_index},
              {"raw_text", raw_text},
              {"probability", probability},
              {"style", ToString(style)},
              {"truncated", truncated}};
}

ReasoningTrace ReasoningTrace::FromJson(const Json& j) {
  ReasoningTrace t;
  t.question_id = RequireString(j, "question_id");
  t.attempt_index = static_cast<int>(RequireNumber(j, "attempt_index"));
  t.raw_text = RequireString(j, "raw_text");
  t.probability = RequireNumber(j, "probability");
  if (!(t.probability >= 0.0 && t.probability <= 1.0)) {
    throw Error("out_of_range", "trace probability for " + t.question_id);
  }
  t.style = PromptStyleFromString(j.value("style", std::string("scratchpad")));
  t.truncated = j.value("truncated", false);
  return t;
}

const char* ToString(PairResult::Status status) {
  switch (status) {
    case PairResult::Status::kPair:
      return "pair";
    case PairResult::Status::kDropped:
      return "dropped";
    case PairResult::Status::kFailed:
      return "generation_failed";
  }
  return "unknown";
}

PairResult GeneratePair(const Question& q, const PromptBundle& bundle,
                        ChatEndpoint& model, const GenerationConfig& config) {
  ChatRequest request;
  request.model = config.model;
  request.messages = {{"user", RenderPrompt(bundle)}};
  request.temperature = config.temperature;
  request.max_tokens = config.max_tokens;
  request.scope = q.id;

  PairResult result;
  std::optional<ReasoningTrace> first;
  const int budget = 1 + config.max_retries;
  for (int attempt = 0; attempt < budget; ++attempt) {
    request.sample_index = attempt;
    ChatResponse response;
    try {
      response = WithRetry(config.retry, [&] { return model.Complete(request); });
    } catch (const EndpointError& e) {
      result.attempts = attempt + 1;
      result.status = PairResult::Status::kFailed;
      result.error = e.what();
      return result;
    }
    result.attempts = attempt + 1;
    auto parsed = ParseForecast(response.text);
    if (auto* err = std::get_if<ParseError>(&parsed)) {
      spdlog::debug("{} attempt {}: {}", q.id, attempt, ToString(*err));
      continue;
    }
    ReasoningTrace trace{.question_id = q.id,
                         .raw_text = std::move(response.text),
                         .probability = std::get<ParsedForecast>(parsed).probability,
                         .attempt_index = attempt,
                         .style = bundle.style,
                         .truncated = response.truncated};
    if (!first) {
      first = std::move(trace);
    } else if (!SameForecast(first->probability, trace.probability)) {
      result.status = PairResult::Status::kPair;
      result.traces.emplace(std::move(*first), std::move(trace));
      return result;
    }
  }
  if (first) {
    result.status = PairResult::Status::kDropped;
  } else {
    result.status = PairResult::Status::kFailed;
    result.error = "no parsable forecast in " + std::to_string(budget) +
                   " generations";
  }
  return result;
}

}  // namespace fdpo
