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


#ifndef FDPO_SYNTHETIC_H_
#define FDPO_SYNTHETIC_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fdpo/endpoint.h"
#include "fdpo/io.h"

namespace fdpo {

// A small simulated forecasting world used for offline end-to-end runs.
// Each question has a topic with its own base rate and a news cue in
// {-1, 0, +1}; outcomes are drawn from sigmoid(topic_logit + 1.6 * cue).
// Articles mention "tailwinds", "headwinds" or "mixed" signals in
// proportions that depend on the cue.
struct SyntheticOptions {
  std::uint64_t seed = 20240701;
  std::size_t train_questions = 150;
  std::size_t test_questions = 45;
  std::size_t gap_questions = 5;      // resolve between the two windows
  bool include_invalid_records = true;
};

struct SyntheticQuestion {
  std::string id;
  int topic = 0;
  int cue = 0;
  double latent_logit = 0.0;
  bool stubborn = false;  // the simulated forecaster never changes its mind
};

struct SyntheticWorld {
  std::vector<Json> records;  // raw ingest records, invalid ones included
  std::vector<SyntheticQuestion> questions;
  std::map<std::string, std::vector<NewsArticle>> articles;

  const SyntheticQuestion* Find(const std::string& id) const;
};

SyntheticWorld MakeSyntheticWorld(const SyntheticOptions& options = {});

// Answers query-generation, summarization and forecasting prompts. The
// forecaster reads only the prompt: it counts cue words in the news and
// recognises the topic from the title. Every response is a deterministic
// function of the request.
class SimulatedChatEndpoint : public ChatEndpoint {
 public:
  explicit SimulatedChatEndpoint(const SyntheticWorld& world) : world_(world) {}
  ChatResponse Complete(const ChatRequest& request) override;

 private:
  const SyntheticWorld& world_;
};

// Returns the question's articles published within a day of the requested
// range, so the client-side window filter still has work to do.
class SimulatedNewsEndpoint : public NewsEndpoint {
 public:
  explicit SimulatedNewsEndpoint(const SyntheticWorld& world) : world_(world) {}
  std::vector<NewsArticle> Search(const NewsQuery& query) override;

 private:
  const SyntheticWorld& world_;
};

// Writes questions.jsonl, config.json and recorded replay transcripts
// (transcripts/chat, transcripts/news) under `dir`. Returns per-stage counts.
Json WriteSyntheticCorpus(const std::filesystem::path& dir,
                          const SyntheticOptions& options = {});

}  // namespace fdpo

#endif  // FDPO_SYNTHETIC_H_
