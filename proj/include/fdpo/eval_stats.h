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

#ifndef FDPO_EVAL_STATS_H_
#define FDPO_EVAL_STATS_H_

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdpo/io.h"

namespace fdpo {

struct ForecastRecord {
  std::string question_id;
  double probability = 0.0;
  int outcome = 0;
  std::string model_tag;

  Json ToJson() const;
  static ForecastRecord FromJson(const Json& j);  // validates ranges
};

inline constexpr double kCiMultiplier = 1.96;

struct Descriptive {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;   // n - 1 denominator
  double sem = 0.0;  // sd / sqrt(n)
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// Throws Error("insufficient_sample") when n < 2.
Descriptive Describe(std::span<const double> values);
// SEM and normal-theory CI from already-summarised moments.
Descriptive DescribeMoments(std::size_t n, double mean, double sd);

struct BrierSummary {
  Descriptive stats;               // over per-question squared errors
  double frac_above_half = 0.0;    // score > 0.5
  double frac_mid = 0.0;           // 0.05 <= score <= 0.5
  double frac_below_0_05 = 0.0;    // score < 0.05
  std::vector<double> scores;      // per-record (p - o)^2, input order

  double mean() const { return stats.mean; }
};

// Throws Error("empty_sample") for no records. A single record yields sd 0.
BrierSummary Brier(std::span<const ForecastRecord> records);

// Regularised incomplete beta I_x(a, b) by continued fraction.
double RegularizedIncompleteBeta(double a, double b, double x);
// Two-sided tail probability of Student's t with `df` degrees of freedom.
double StudentTTwoSidedP(double t, double df);

enum class VarianceMode { kWelch, kPooled };

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

// Independent-samples two-sided t-test, Welch-Satterthwaite by default.
// Throws Error("insufficient_sample") for n < 2 and Error("degenerate_test")
// when both samples are constant with equal means.
TTestResult TTest(std::span<const double> a, std::span<const double> b,
                  VarianceMode mode = VarianceMode::kWelch);

// Benjamini-Hochberg step-up adjustment, returned in input order. Throws
// Error("invalid_p_value") for inputs outside [0, 1].
std::vector<double> BhAdjust(std::span<const double> p_values);

struct PairwiseTest {
  std::string model_a;
  std::string model_b;
  double t_statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  double p_adjusted = 1.0;
  bool degenerate = false;  // both samples constant and equal
};

struct EvalReport {
  std::map<std::string, BrierSummary> summaries;  // by tag
  std::vector<PairwiseTest> tests;                // all C(k, 2) tag pairs
  VarianceMode mode = VarianceMode::kWelch;
  // Per-tag records sorted by question_id, for the plot-ready score files.
  std::map<std::string, std::vector<ForecastRecord>> records;
};

// Requires identical question_id sets across tags; otherwise throws
// Error("unaligned_samples") naming the offending tags.
EvalReport Evaluate(std::map<std::string, std::vector<ForecastRecord>> models,
                    VarianceMode mode = VarianceMode::kWelch);

// report.jsonl (summary and test sections), report.txt, and
// scores_<tag>.csv per tag. Output is byte-identical for identical input.
void WriteReport(const EvalReport& report, const std::filesystem::path& dir);
std::string ReportJsonLines(const EvalReport& report);
std::string ReportText(const EvalReport& report);

}  // namespace fdpo

#endif  // FDPO_EVAL_STATS_H_
