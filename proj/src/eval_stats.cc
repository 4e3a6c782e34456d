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

#include "fdpo/eval_stats.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>

#include "fdpo/error.h"

namespace fdpo {

Json ForecastRecord::ToJson() const {
  return Json{{"question_id", question_id},
              {"probability", probability},
              {"outcome", outcome},
              {"model_tag", model_tag}};
}

ForecastRecord ForecastRecord::FromJson(const Json& j) {
  ForecastRecord r;
  r.question_id = RequireString(j, "question_id");
  r.probability = RequireNumber(j, "probability");
  r.outcome = static_cast<int>(RequireNumber(j, "outcome"));
  r.model_tag = j.value("model_tag", std::string());
  if (!(r.probability >= 0.0 && r.probability <= 1.0)) {
    throw Error("out_of_range", "probability for " + r.question_id);
  }
  if (r.outcome != 0 && r.outcome != 1) {
    throw Error("non_binary_outcome", r.question_id);
  }
  return r;
}

namespace {

// Mean and sample standard deviation; exact for constant input.
std::pair<double, double> MeanSd(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) {
    return {v.front(), 0.0};
  }
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0};
}

Descriptive Summarize(std::span<const double> v) {
  const auto [mean, sd] = MeanSd(v);
  return DescribeMoments(v.size(), mean, sd);
}

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double BetaContinuedFraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  return h;
}

}  // namespace

Descriptive DescribeMoments(std::size_t n, double mean, double sd) {
  Descriptive d{.n = n, .mean = mean, .sd = sd};
  d.sem = sd / std::sqrt(static_cast<double>(n));
  d.ci_low = mean - kCiMultiplier * d.sem;
  d.ci_high = mean + kCiMultiplier * d.sem;
  return d;
}

Descriptive Describe(std::span<const double> values) {
  if (values.size() < 2) {
    throw Error("insufficient_sample", "need at least 2 values, got " +
                                           std::to_string(values.size()));
  }
  return Summarize(values);
}

BrierSummary Brier(std::span<const ForecastRecord> records) {
  if (records.empty()) throw Error("empty_sample", "no forecast records");
  BrierSummary s;
  s.scores.reserve(records.size());
  std::size_t above = 0, below = 0;
  for (const auto& r : records) {
    const double e = r.probability - r.outcome;
    const double score = e * e;
    s.scores.push_back(score);
    if (score > 0.5) ++above;
    if (score < 0.05) ++below;
  }
  s.stats = Summarize(s.scores);
  const double n = static_cast<double>(records.size());
  s.frac_above_half = above / n;
  s.frac_below_0_05 = below / n;
  s.frac_mid = static_cast<double>(records.size() - above - below) / n;
  return s;
}

double RegularizedIncompleteBeta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
    throw Error("invalid_argument", "incomplete beta domain");
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(log_front) * BetaContinuedFraction(a, b, x) / a;
  }
  return 1.0 - std::exp(log_front) * BetaContinuedFraction(b, a, 1.0 - x) / b;
}

double StudentTTwoSidedP(double t, double df) {
  if (std::isnan(t) || !(df > 0.0)) {
    throw Error("invalid_argument", "student t domain");
  }
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::clamp(RegularizedIncompleteBeta(0.5 * df, 0.5, x), 0.0, 1.0);
}

TTestResult TTest(std::span<const double> a, std::span<const double> b,
                  VarianceMode mode) {
  if (a.size() < 2 || b.size() < 2) {
    throw Error("insufficient_sample", "t-test needs n >= 2 per sample");
  }
  const auto [ma, sa] = MeanSd(a);
  const auto [mb, sb] = MeanSd(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  TTestResult r;
  double se = 0.0;
  if (mode == VarianceMode::kWelch) {
    const double va = sa * sa / na, vb = sb * sb / nb;
    se = std::sqrt(va + vb);
    const double denom = va * va / (na - 1.0) + vb * vb / (nb - 1.0);
    r.df = denom > 0.0 ? (va + vb) * (va + vb) / denom : na + nb - 2.0;
  } else {
    const double pooled =
        ((na - 1.0) * sa * sa + (nb - 1.0) * sb * sb) / (na + nb - 2.0);
    se = std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    r.df = na + nb - 2.0;
  }
  if (se == 0.0) {
    if (ma == mb) throw Error("degenerate_test", "both samples constant and equal");
    r.t = ma > mb ? std::numeric_limits<double>::infinity()
                  : -std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
    return r;
  }
  r.t = (ma - mb) / se;
  r.p_value = StudentTTwoSidedP(r.t, r.df);
  return r;
}

std::vector<double> BhAdjust(std::span<const double> p_values) {
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error("invalid_p_value", std::to_string(p));
    }
  }
  const std::size_t m = p_values.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return p_values[i] < p_values[j];
  });
  std::vector<double> adjusted(m);
  double running = 1.0;
  for (std::size_t k = m; k-- > 0;) {
    const std::size_t rank = k + 1;
    // Factor first: it is exactly 1 at the top rank and never below 1, so the
    // adjusted value never rounds below its input.
    const double scaled = p_values[order[k]] * (static_cast<double>(m) /
                                                static_cast<double>(rank));
    running = std::min(running, scaled);
    adjusted[order[k]] = std::min(1.0, running);
  }
  return adjusted;
}

EvalReport Evaluate(std::map<std::string, std::vector<ForecastRecord>> models,
                    VarianceMode mode) {
  if (models.empty()) throw Error("empty_sample", "no model tags");
  EvalReport report;
  report.mode = mode;
  std::set<std::string> reference_ids;
  std::string reference_tag;
  for (auto& [tag, records] : models) {
    std::sort(records.begin(), records.end(),
              [](const ForecastRecord& x, const ForecastRecord& y) {
                return x.question_id < y.question_id;
              });
    std::set<std::string> ids;
    for (const auto& r : records) ids.insert(r.question_id);
    if (ids.size() != records.size()) {
      throw Error("unaligned_samples", tag + " has duplicate question ids");
    }
    if (reference_tag.empty()) {
      reference_tag = tag;
      reference_ids = std::move(ids);
    } else if (ids != reference_ids) {
      throw Error("unaligned_samples",
                  "question sets differ between '" + reference_tag + "' and '" +
                      tag + "'");
    }
    report.summaries.emplace(tag, Brier(records));
  }

  std::vector<double> raw;
  for (auto a = report.summaries.begin(); a != report.summaries.end(); ++a) {
    for (auto b = std::next(a); b != report.summaries.end(); ++b) {
      PairwiseTest test{.model_a = a->first, .model_b = b->first};
      try {
        const auto r = TTest(a->second.scores, b->second.scores, mode);
        test.t_statistic = r.t;
        test.df = r.df;
        test.p_value = r.p_value;
      } catch (const Error& e) {
        if (e.code() != "degenerate_test") throw;
        test.degenerate = true;
        test.p_value = 1.0;
      }
      raw.push_back(test.p_value);
      report.tests.push_back(std::move(test));
    }
  }
  const auto adjusted = BhAdjust(raw);
  for (std::size_t i = 0; i < adjusted.size(); ++i) {
    report.tests[i].p_adjusted = adjusted[i];
  }
  report.records = std::move(models);
  return report;
}

namespace {

// RFC 4180 quoting for fields containing separators or quotes.
std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

Json NumberOrNull(double v) { return std::isfinite(v) ? Json(v) : Json(); }

std::string Fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string ReportJsonLines(const EvalReport& report) {
  std::string out;
  for (const auto& [tag, s] : report.summaries) {
    out += CanonicalDump(Json{{"section", "summary"},
                              {"model_tag", tag},
                              {"n", s.stats.n},
                              {"mean", s.stats.mean},
                              {"sd", s.stats.sd},
                              {"sem", s.stats.sem},
                              {"ci95", {s.stats.ci_low, s.stats.ci_high}},
                              {"frac_above_half", s.frac_above_half},
                              {"frac_below_0_05", s.frac_below_0_05}}) +
           "\n";
  }
  for (const auto& t : report.tests) {
    out += CanonicalDump(Json{{"section", "pairwise_test"},
                              {"model_a", t.model_a},
                              {"model_b", t.model_b},
                              {"t_statistic", NumberOrNull(t.t_statistic)},
                              {"df", t.df},
                              {"p_value", t.p_value},
                              {"p_adjusted", t.p_adjusted},
                              {"degenerate", t.degenerate},
                              {"variance", report.mode == VarianceMode::kWelch
                                               ? "welch"
                                               : "pooled"}}) +
           "\n";
  }
  return out;
}

std::string ReportText(const EvalReport& report) {
  std::string out = "Brier scores (lower is better; 0.25 = always 0.5)\n\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%-24s %6s %7s %7s %7s %17s %8s %8s\n",
                "model", "n", "mean", "sd", "sem", "95% CI", ">0.5", "<0.05");
  out += line;
  for (const auto& [tag, s] : report.summaries) {
    const std::string ci =
        "[" + Fixed(s.stats.ci_low, 3) + ", " + Fixed(s.stats.ci_high, 3) + "]";
    std::snprintf(line, sizeof(line),
                  "%-24s %6zu %7.3f %7.3f %7.3f %17s %7.2f%% %7.2f%%\n",
                  tag.c_str(), s.stats.n, s.stats.mean, s.stats.sd, s.stats.sem,
                  ci.c_str(), 100.0 * s.frac_above_half,
                  100.0 * s.frac_below_0_05);
    out += line;
  }
  if (!report.tests.empty()) {
    out += "\nPairwise t-tests (";
    out += report.mode == VarianceMode::kWelch ? "Welch" : "pooled";
    out += "), Benjamini-Hochberg adjusted\n\n";
    std::snprintf(line, sizeof(line), "%-24s %-24s %9s %9s %9s\n", "model 1",
                  "model 2", "t", "p", "adj. p");
    out += line;
    for (const auto& t : report.tests) {
      std::snprintf(line, sizeof(line), "%-24s %-24s %9.3f %9.3f %9.3f%s\n",
                    t.model_a.c_str(), t.model_b.c_str(), t.t_statistic,
                    t.p_value, t.p_adjusted, t.degenerate ? " (degenerate)" : "");
      out += line;
    }
  }
  return out;
}

void WriteReport(const EvalReport& report, const std::filesystem::path& dir) {
  WriteFileAtomic(dir / "report.jsonl", ReportJsonLines(report));
  WriteFileAtomic(dir / "report.txt", ReportText(report));
  for (const auto& [tag, records] : report.records) {
    std::string csv = "question_id,probability,outcome,brier\n";
    for (const auto& r : records) {
      const double e = r.probability - r.outcome;
      csv += CsvField(r.question_id) + "," + Json(r.probability).dump() + "," +
             std::to_string(r.outcome) + "," + Json(e * e).dump() + "\n";
    }
    WriteFileAtomic(dir / ("scores_" + tag + ".csv"), csv);
  }
}

}  // namespace fdpo
