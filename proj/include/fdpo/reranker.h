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

#ifndef FDPO_RERANKER_H_
#define FDPO_RERANKER_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fdpo/question_store.h"
#include "fdpo/selfplay.h"

namespace fdpo {

enum class LabelMode { kTrueOutcome, kRandomized };

const char* ToString(LabelMode mode);
LabelMode LabelModeFromString(std::string_view s);  // throws ConfigError

// Distance of a forecast from the resolved outcome, |p - o|.
inline double RankingDistance(double p, int outcome) {
  return p > outcome ? p - outcome : outcome - p;
}

struct RankedPair {
  std::size_t chosen_index = 0;  // 0 for p1, 1 for p2
  std::size_t rejected_index = 1;
  double r_chosen = 0.0;
  double r_rejected = 0.0;
};

// The trace whose forecast is closer to the outcome is chosen. Throws
// Error("tie_pair") when the two forecasts are identical.
RankedPair RankPair(double p1, double p2, int outcome);

struct PreferencePair {
  std::string question_id;
  ReasoningTrace chosen;
  ReasoningTrace rejected;
  int outcome = 0;
  double r_chosen = 0.0;
  double r_rejected = 0.0;
  LabelMode label_mode = LabelMode::kTrueOutcome;

  Json ToJson() const;
  static PreferencePair FromJson(const Json& j);
};

struct BuildPairsResult {
  std::vector<PreferencePair> pairs;  // sorted by question_id
  // (question_id, reason) for skipped questions: "wrong_trace_count",
  // "missing_outcome", "tie_pair".
  std::vector<std::pair<std::string, std::string>> skipped;
};

// One pair per question that has exactly two traces and a resolved outcome.
// In randomized mode the orientation is a fair coin flip derived from
// (seed, question_id), independent of r values and of input order.
BuildPairsResult BuildPairs(std::span<const ReasoningTrace> traces,
                            const QuestionStore& outcomes, LabelMode mode,
                            std::uint64_t seed);

// The coin used by randomized mode: true means trace order (first, second)
// becomes (chosen, rejected).
bool RandomizedOrientation(std::uint64_t seed, std::string_view question_id);

struct DpoExample {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  std::string question_id;
  LabelMode label_mode = LabelMode::kTrueOutcome;
  double r_chosen = 0.0;
  double r_rejected = 0.0;

  Json ToJson() const;
  static DpoExample FromJson(const Json& j);
};

// Joins pairs with the exact prompts used at generation time. Throws
// Error("missing_prompt") if a pair's question has no recorded prompt.
std::vector<DpoExample> MakeExamples(
    std::span<const PreferencePair> pairs,
    const std::map<std::string, std::string>& prompts);

struct DatasetManifest {
  std::size_t count = 0;
  LabelMode label_mode = LabelMode::kTrueOutcome;
  std::uint64_t seed = 0;
  std::string content_hash;  // SHA-256 of the dataset file bytes

  Json ToJson() const;
  static DatasetManifest FromJson(const Json& j);
};

std::filesystem::path ManifestPath(const std::filesystem::path& dataset);

// Writes one record per line ordered by question_id plus a sidecar
// "<path>.manifest.json". Throws Error("empty_dataset") for no examples; on
// I/O failure no partial file is left behind.
DatasetManifest EmitDataset(std::vector<DpoExample> examples,
                            const std::filesystem::path& path,
                            std::uint64_t seed);

// Reads a dataset, checking its manifest when one exists. Throws
// Error("manifest_mismatch") if counts or hashes disagree.
std::vector<DpoExample> LoadDataset(const std::filesystem::path& path);

}  // namespace fdpo

#endif  // FDPO_RERANKER_H_
