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

#include <algorithm>
#include <cmath>
#include <random>

#include "fdpo/eval_stats.h"
#include "oracle.h"
#include "reported_stats.h"
#include "test_support.h"

namespace fdpo {
namespace {

std::vector<ForecastRecord> Records(const std::vector<double>& p, const std::vector<int>& o,
                                    const std::string& tag = "m") {
  std::vector<ForecastRecord> out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    out.push_back({"q" + std::to_string(100 + i), p[i], o[i], tag});
  }
  return out;
}

TEST(BrierTest, Examples) {
  EXPECT_EQ(Brier(Records({0.5, 0.5, 0.5}, {0, 1, 1})).mean(), 0.25);
  EXPECT_EQ(Brier(Records({1, 0}, {1, 0})).mean(), 0.0);
  EXPECT_EQ(Brier(Records({1, 0}, {0, 1})).mean(), 1.0);
  const auto s = Brier(Records({0.9, 0.3}, {1, 0}));
  EXPECT_NEAR(s.mean(), (0.01 + 0.09) / 2, 1e-15);
  EXPECT_EQ(s.scores.size(), 2u);
  EXPECT_THROW(Brier({}), Error);
  const auto one = Brier(Records({0.2}, {1}));
  EXPECT_NEAR(one.mean(), 0.64, 1e-15);
  EXPECT_EQ(one.stats.sd, 0.0);
}

TEST(BrierTest, IgnoranceBenchmarkForAnyOutcomes) {
  std::mt19937 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 500;
    std::vector<double> p(n, 0.5);
    std::vector<int> o(n);
    for (auto& x : o) x = static_cast<int>(rng() & 1);
    EXPECT_EQ(Brier(Records(p, o)).mean(), 0.25);
  }
}

TEST(BrierTest, PermutationInvarianceAndBuckets) {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> p(1000);
  std::vector<int> o(1000);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = u(rng);
    o[i] = static_cast<int>(rng() & 1);
  }
  auto records = Records(p, o);
  const auto s = Brier(records);
  double direct = 0;
  for (std::size_t i = 0; i < p.size(); ++i) direct += (p[i] - o[i]) * (p[i] - o[i]);
  EXPECT_NEAR(s.mean(), direct / p.size(), 1e-12);
  std::shuffle(records.begin(), records.end(), rng);
  EXPECT_NEAR(Brier(records).mean(), s.mean(), 1e-12);
  EXPECT_NEAR(s.frac_above_half + s.frac_mid + s.frac_below_0_05, 1.0, 1e-12);
  EXPECT_NEAR(s.stats.sem * std::sqrt(1000.0), s.stats.sd, 1e-15);
}

TEST(BrierTest, BucketBoundariesAreStrict) {
  // Scores 0.49999, 0.50013, 0.04999 and 0.05001.
  const auto s = Brier(Records({0.7071, 0.7072, 0.22358, 0.22362, 0.5}, {0, 0, 0, 0, 1}));
  EXPECT_NEAR(s.frac_above_half, 0.2, 1e-15);
  EXPECT_NEAR(s.frac_below_0_05, 0.2, 1e-15);
  EXPECT_NEAR(s.frac_mid, 0.6, 1e-15);
  const auto exact = Brier(Records({0.75}, {0}));  // 0.5625
  EXPECT_EQ(exact.frac_above_half, 1.0);
}

TEST(DescribeTest, ReportedRowExamples) {
  auto d = DescribeMoments(2300, 0.200, 0.218);
  EXPECT_NEAR(d.sem, 0.00455, 0.00001);
  EXPECT_NEAR(d.ci_low, 0.191, 0.0005);
  EXPECT_NEAR(d.ci_high, 0.209, 0.0005);
  d = DescribeMoments(2300, 0.214, 0.186);
  EXPECT_NEAR(d.ci_low, 0.206, 0.0005);
  EXPECT_NEAR(std::round(d.ci_high * 1000) / 1000, 0.222, 1e-12);
}

TEST(DescribeTest, ReportedRowsAreJointlyConsistent) {
  for (const auto& row : fixtures::kReportedRows) {
    const auto check = fixtures::CheckRow(row);
    EXPECT_TRUE(check.consistent) << row.model << " best " << check.best_residual;
    EXPECT_LT(check.residual_at_printed, 0.001) << row.model;
  }
}

TEST(DescribeTest, ConstantAndSmallSamples) {
  const std::vector<double> c(7, 0.3);
  const auto d = Describe(c);
  EXPECT_EQ(d.sd, 0.0);
  EXPECT_EQ(d.ci_low, 0.3);
  EXPECT_EQ(d.ci_high, 0.3);
  const std::vector<double> one = {0.1};
  EXPECT_THROW(Describe(one), Error);
  const std::vector<double> two = {1, 3};
  EXPECT_NEAR(Describe(two).sd, std::sqrt(2.0), 1e-15);
}

std::vector<double> Sample(std::mt19937_64& rng, std::size_t n, double shift, double scale) {
  std::normal_distribution<double> dist(shift, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

TEST(IncompleteBetaTest, MatchesOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ab(0.3, 400), x(0, 1);
  for (int i = 0; i < 200; ++i) {
    const double a = ab(rng), b = i % 2 ? 0.5 : ab(rng), xv = x(rng);
    const auto ref = static_cast<double>(oracle::IncompleteBeta(a, b, xv));
    EXPECT_NEAR(RegularizedIncompleteBeta(a, b, xv), ref, 1e-11) << a << " " << b << " " << xv;
  }
}

TEST(TTestTest, WelchMatchesOracleOnRandomPairs) {
  std::mt19937_64 rng(6);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const auto a = Sample(rng, 5 + rng() % 200, 0.2, 0.1 + 0.1 * (i % 3));
    const auto b = Sample(rng, 5 + rng() % 200, 0.2 + 0.01 * (i % 7), 0.15);
    const auto r = TTest(a, b);
    const auto w = oracle::WelchTest(a, b);
    EXPECT_NEAR(r.t, static_cast<double>(w.t), 1e-9);
    EXPECT_NEAR(r.df, static_cast<double>(w.df), 1e-7);
    worst = std::max(worst, std::abs(r.p_value - static_cast<double>(w.p)));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(TTestTest, FixedVectors) {
  const std::vector<double> a = {0.12, 0.05, 0.31, 0.22, 0.09, 0.41, 0.02, 0.18, 0.27, 0.14};
  const std::vector<double> b = {0.25, 0.33, 0.19, 0.48, 0.36, 0.29, 0.52, 0.21, 0.40, 0.31};
  const auto r = TTest(a, b);
  const auto w = oracle::WelchTest(a, b);
  EXPECT_NEAR(r.p_value, static_cast<double>(w.p), 1e-9);
  EXPECT_LT(r.p_value, 0.01);
  EXPECT_LT(r.t, 0.0);
}

TEST(TTestTest, PermutationGivesPOne) {
  std::vector<double> a = {0.1, 0.4, 0.2, 0.9, 0.3};
  std::vector<double> b = a;
  std::reverse(b.begin(), b.end());
  const auto r = TTest(a, b);
  EXPECT_NEAR(r.t, 0.0, 1e-15);
  EXPECT_NEAR(r.p_value, 1.0, 1e-12);
}

TEST(TTestTest, ShiftDrivesPToZero) {
  std::mt19937_64 rng(7);
  const auto a = Sample(rng, 30, 0, 1);
  const auto base = Sample(rng, 30, 0, 1);
  double previous = 1.1;
  for (double shift = 0.0; shift <= 5.0; shift += 0.25) {
    auto b = base;
    for (auto& x : b) x += shift;
    const double p = TTest(a, b).p_value;
    if (shift > 0.5) EXPECT_LT(p, previous);
    previous = p;
  }
  EXPECT_LT(previous, 1e-12);
}

TEST(TTestTest, DegenerateAndErrors) {
  const std::vector<double> c(5, 0.2), d(5, 0.3), one = {0.1};
  try {
    TTest(c, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "degenerate_test");
  }
  EXPECT_EQ(TTest(c, d).p_value, 0.0);
  EXPECT_THROW(TTest(one, c), Error);
}

TEST(TTestTest, PooledEqualsWelchForBalancedEqualVariance) {
  const std::vector<double> a = {1, 2, 3, 4}, b = {2, 3, 4, 5};
  const auto w = TTest(a, b);
  const auto p = TTest(a, b, VarianceMode::kPooled);
  EXPECT_NEAR(w.t, p.t, 1e-15);
  EXPECT_EQ(p.df, 6.0);
  EXPECT_NEAR(w.df, 6.0, 1e-12);
}

TEST(BhAdjustTest, ReportedPValues) {
  const auto adj = BhAdjust(fixtures::kReportedRawP);
  for (std::size_t i = 0; i < adj.size(); ++i) {
    EXPECT_NEAR(adj[i], fixtures::kReportedAdjustedP[i], 0.001) << i;
  }
  EXPECT_NEAR(adj[4], 6.0 / 5.0 * 0.589, 1e-15);
}

TEST(BhAdjustTest, TrivialCasesAndInputOrder) {
  EXPECT_EQ(BhAdjust(std::vector<double>{0.03}), std::vector<double>{0.03});
  EXPECT_EQ(BhAdjust(std::vector<double>{0.2, 0.2, 0.2}), (std::vector<double>{0.2, 0.2, 0.2}));
  const std::vector<double> shuffled = {0.931, 0.015, 0.589, 0.0003, 0.018, 0.017};
  const auto adj = BhAdjust(shuffled);
  EXPECT_NEAR(adj[0], 0.931, 1e-15);
  EXPECT_NEAR(adj[2], 0.7068, 1e-12);
  EXPECT_NEAR(adj[1], 0.027, 1e-12);
  EXPECT_THROW(BhAdjust(std::vector<double>{0.1, 1.2}), Error);
  EXPECT_THROW(BhAdjust(std::vector<double>{-0.1}), Error);
  EXPECT_TRUE(BhAdjust(std::vector<double>{}).empty());
}

TEST(BhAdjustTest, MonotoneBoundedAndAboveInput) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> p(1 + rng() % 40);
    for (auto& x : p) x = u(rng) * (trial % 2 ? 1.0 : 0.05);
    const auto adj = BhAdjust(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      EXPECT_GE(adj[i], p[i]);
      EXPECT_LE(adj[i], 1.0);
      for (std::size_t j = 0; j < p.size(); ++j) {
        if (p[i] <= p[j]) EXPECT_LE(adj[i], adj[j]);
      }
    }
  }
}

std::map<std::string, std::vector<ForecastRecord>> ThreeModels() {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  std::map<std::string, std::vector<ForecastRecord>> models;
  std::vector<int> o(60);
  for (auto& x : o) x = static_cast<int>(rng() & 1);
  for (const std::string tag : {"base", "control", "fine_tune"}) {
    std::vector<double> p(o.size());
    for (std::size_t i = 0; i < o.size(); ++i) {
      const double skill = tag == "fine_tune" ? 0.5 : 0.1;
      p[i] = std::clamp(skill * o[i] + (1 - skill) * u(rng), 0.0, 1.0);
    }
    models[tag] = Records(p, o, tag);
  }
  return models;
}

TEST(EvaluateTest, PairwiseTestsForEveryTagPair) {
  auto models = ThreeModels();
  auto report = Evaluate(models);
  ASSERT_EQ(report.tests.size(), 3u);
  EXPECT_EQ(report.tests[0].model_a, "base");
  EXPECT_EQ(report.tests[0].model_b, "control");
  for (const auto& t : report.tests) {
    EXPECT_GE(t.p_adjusted, t.p_value);
    EXPECT_LE(t.p_adjusted, 1.0);
  }
  models["extra"] = models["base"];
  for (auto& r : models["extra"]) r.model_tag = "extra";
  EXPECT_EQ(Evaluate(models).tests.size(), 6u);
}

TEST(EvaluateTest, IdenticalRecordsGivePOne) {
  auto models = ThreeModels();
  std::map<std::string, std::vector<ForecastRecord>> twins = {{"a", models["base"]},
                                                              {"b", models["base"]}};
  const auto report = Evaluate(twins);
  ASSERT_EQ(report.tests.size(), 1u);
  EXPECT_NEAR(report.tests[0].p_value, 1.0, 1e-12);
  EXPECT_FALSE(report.tests[0].degenerate);
}

TEST(EvaluateTest, UnalignedSamplesRejected) {
  auto models = ThreeModels();
  models["control"].pop_back();
  try {
    Evaluate(models);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "unaligned_samples");
    EXPECT_NE(std::string(e.what()).find("control"), std::string::npos);
  }
}

TEST(EvaluateTest, ReportIsDeterministicAndOrderFree) {
  testing::TempDir a, b;
  auto models = ThreeModels();
  WriteReport(Evaluate(models), a.path());
  for (auto& [tag, records] : models) std::reverse(records.begin(), records.end());
  WriteReport(Evaluate(models), b.path());
  for (const char* name : {"report.jsonl", "report.txt", "scores_base.csv",
                           "scores_fine_tune.csv"}) {
    EXPECT_EQ(ReadFile(a / name), ReadFile(b / name)) << name;
  }
  const auto lines = ReadJsonLines(a / "report.jsonl");
  ASSERT_EQ(lines.size(), 6u);
  EXPECT_EQ(lines[0]["section"], "summary");
  EXPECT_EQ(lines[5]["section"], "pairwise_test");
  EXPECT_EQ(lines[5]["variance"], "welch");
  const auto csv = ReadFile(a / "scores_base.csv");
  EXPECT_TRUE(csv.starts_with("question_id,probability,outcome,brier\nq100,"));
}

TEST(EvaluateTest, CsvQuotesAwkwardIds) {
  testing::TempDir dir;
  std::map<std::string, std::vector<ForecastRecord>> m = {
      {"x", {{"a,b", 0.5, 1, "x"}, {"say \"hi\"", 0.2, 0, "x"}}}};
  WriteReport(Evaluate(m), dir.path());
  const auto csv = ReadFile(dir / "scores_x.csv");
  EXPECT_NE(csv.find("\"a,b\",0.5,1,"), std::string::npos);
  EXPECT_NE(csv.find("\"say \"\"hi\"\"\",0.2,0,"), std::string::npos);
}

TEST(ForecastRecordTest, Validation) {
  ForecastRecord r{"q", 0.3, 1, "m"};
  EXPECT_EQ(ForecastRecord::FromJson(r.ToJson()).ToJson(), r.ToJson());
  Json bad = r.ToJson();
  bad["probability"] = 1.01;
  EXPECT_THROW(ForecastRecord::FromJson(bad), Error);
  bad = r.ToJson();
  bad["outcome"] = 2;
  EXPECT_THROW(ForecastRecord::FromJson(bad), Error);
}

}  // namespace
}  // namespace fdpo
