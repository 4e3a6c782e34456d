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

#include "fdpo/dpo_core.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "fdpo/error.h"
#include "fdpo/forecast_parser.h"
#include "fdpo/random.h"

namespace fdpo {
namespace {

void LogSoftmaxInPlace(std::vector<double>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  for (double& v : z) v -= lse;
}

void RequireFinite(const PolicyLogProbs& lp, double beta) {
  if (!std::isfinite(lp.chosen_theta) || !std::isfinite(lp.rejected_theta) ||
      !std::isfinite(lp.chosen_ref) || !std::isfinite(lp.rejected_ref) ||
      !std::isfinite(beta)) {
    throw Error("non_finite_input", "dpo log-probabilities");
  }
  if (!(beta > 0.0)) throw ConfigError("invalid_beta", std::to_string(beta));
}

const char* ToString(Optimizer o) {
  return o == Optimizer::kSgd ? "sgd" : "adamw";
}

}  // namespace

void DpoConfig::Validate() const {
  if (!(beta > 0.0)) throw ConfigError("invalid_dpo_config", "beta must be > 0");
  if (!(learning_rate > 0.0)) {
    throw ConfigError("invalid_dpo_config", "learning_rate must be > 0");
  }
  if (epochs < 0) throw ConfigError("invalid_dpo_config", "epochs must be >= 0");
  if (batch_size <= 0 || grad_accumulation <= 0) {
    throw ConfigError("invalid_dpo_config",
                      "batch_size and grad_accumulation must be positive");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("invalid_dpo_config", "validation_fraction must be in [0, 1)");
  }
}

Json DpoConfig::ToJson() const {
  return Json{{"beta", beta},
              {"learning_rate", learning_rate},
              {"epochs", epochs},
              {"batch_size", batch_size},
              {"grad_accumulation", grad_accumulation},
              {"seed", seed},
              {"optimizer", ToString(optimizer)},
              {"weight_decay", weight_decay},
              {"plateau_tolerance", plateau_tolerance},
              {"validation_fraction", validation_fraction}};
}

DpoConfig DpoConfig::FromJson(const Json& j) {
  DpoConfig c;
  c.beta = j.value("beta", c.beta);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.grad_accumulation = j.value("grad_accumulation", c.grad_accumulation);
  c.seed = j.value("seed", c.seed);
  const std::string opt = j.value("optimizer", std::string("sgd"));
  if (opt == "sgd") {
    c.optimizer = Optimizer::kSgd;
  } else if (opt == "adamw") {
    c.optimizer = Optimizer::kAdamW;
  } else {
    throw ConfigError("invalid_dpo_config", "unknown optimizer " + opt);
  }
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.plateau_tolerance = j.value("plateau_tolerance", c.plateau_tolerance);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.Validate();
  return c;
}

double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double LogSigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double DpoLoss(const PolicyLogProbs& lp, double beta) {
  RequireFinite(lp, beta);
  return -LogSigmoid(beta * lp.Margin());
}

DpoGradient DpoGrad(const PolicyLogProbs& lp, double beta) {
  RequireFinite(lp, beta);
  const double s = Sigmoid(-beta * lp.Margin());
  return DpoGradient{.chosen_theta = -beta * s, .rejected_theta = beta * s};
}

SparseFeatures PromptFeaturizer::Features(std::string_view prompt) const {
  std::map<std::uint32_t, int> counts;
  std::string token;
  auto flush = [&] {
    if (!token.empty()) {
      ++counts[1 + static_cast<std::uint32_t>(Fnv1a64(token) % hashed_dims_)];
      token.clear();
    }
  };
  for (unsigned char c : prompt) {
    if (std::isalnum(c)) {
      token.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  SparseFeatures phi;
  phi.index.reserve(counts.size() + 1);
  phi.value.reserve(counts.size() + 1);
  phi.index.push_back(0);
  phi.value.push_back(1.0);
  double norm = 0.0;
  for (const auto& [bucket, n] : counts) {
    const double v = std::log1p(static_cast<double>(n));
    phi.index.push_back(bucket);
    phi.value.push_back(v);
    norm += v * v;
  }
  if (norm > 0.0) {
    const double scale = 1.0 / std::sqrt(norm);
    for (std::size_t i = 1; i < phi.value.size(); ++i) phi.value[i] *= scale;
  }
  return phi;
}

int ForecastBin(double probability) {
  return static_cast<int>(std::lround(std::clamp(probability, 0.0, 1.0) * 100.0));
}

double BinBasis(int bin, int k) {
  // Legendre polynomials P1..P4 of u = 2v - 1, orthogonal on [-1, 1].
  const double u = 2.0 * BinValue(bin) - 1.0;
  const double u2 = u * u;
  switch (k) {
    case 0:
      return u;
    case 1:
      return 0.5 * (3.0 * u2 - 1.0);
    case 2:
      return 0.5 * (5.0 * u2 - 3.0) * u;
    case 3:
      return (35.0 * u2 * u2 - 30.0 * u2 + 3.0) / 8.0;
  }
  throw std::out_of_range("bin basis index");
}

namespace {

const std::array<std::array<double, kBinBasis>, kForecastBins>& BasisTable() {
  static const auto table = [] {
    std::array<std::array<double, kBinBasis>, kForecastBins> t{};
    for (int b = 0; b < kForecastBins; ++b) {
      for (int k = 0; k < kBinBasis; ++k) t[b][k] = BinBasis(b, k);
    }
    return t;
  }();
  return table;
}

// E_p[basis_k] for each k.
std::array<double, kBinBasis> ExpectedBasis(const std::vector<double>& p) {
  const auto& table = BasisTable();
  std::array<double, kBinBasis> e{};
  for (int b = 0; b < kForecastBins; ++b) {
    for (int k = 0; k < kBinBasis; ++k) e[k] += p[b] * table[b][k];
  }
  return e;
}

}  // namespace

ToyPolicy::ToyPolicy(std::size_t feature_dim)
    : feature_dim_(feature_dim), weights_(kBinBasis * feature_dim, 0.0) {}

std::vector<double> ToyPolicy::Logits(const SparseFeatures& phi) const {
  std::array<double, kBinBasis> score{};
  for (int k = 0; k < kBinBasis; ++k) {
    const double* row = weights_.data() + k * feature_dim_;
    for (std::size_t i = 0; i < phi.index.size(); ++i) {
      score[k] += row[phi.index[i]] * phi.value[i];
    }
  }
  const auto& table = BasisTable();
  std::vector<double> z(kForecastBins, 0.0);
  for (int b = 0; b < kForecastBins; ++b) {
    for (int k = 0; k < kBinBasis; ++k) z[b] += table[b][k] * score[k];
  }
  return z;
}

std::vector<double> ToyPolicy::LogProbabilities(const SparseFeatures& phi) const {
  auto z = Logits(phi);
  LogSoftmaxInPlace(z);
  return z;
}

std::vector<double> ToyPolicy::Probabilities(const SparseFeatures& phi) const {
  auto lp = LogProbabilities(phi);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

double ToyPolicy::LogProb(const SparseFeatures& phi, int bin) const {
  return LogProbabilities(phi).at(bin);
}

double ToyPolicy::ExpectedForecast(const SparseFeatures& phi) const {
  const auto p = Probabilities(phi);
  double mean = 0.0;
  for (int b = 0; b < kForecastBins; ++b) mean += p[b] * BinValue(b);
  return std::clamp(mean, 0.0, 1.0);
}

void ToyPolicy::AccumulateLogProbGradient(const SparseFeatures& phi, int bin,
                                          double coef,
                                          std::span<double> grad) const {
  const auto e = ExpectedBasis(Probabilities(phi));
  const auto& table = BasisTable();
  for (int k = 0; k < kBinBasis; ++k) {
    const double row_coef = coef * (table[bin][k] - e[k]);
    double* row = grad.data() + k * feature_dim_;
    for (std::size_t i = 0; i < phi.index.size(); ++i) {
      row[phi.index[i]] += row_coef * phi.value[i];
    }
  }
}

Json ToyPolicy::ToJson() const {
  Json triples = Json::array();
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    if (weights_[k] != 0.0) {
      triples.push_back({k / feature_dim_, k % feature_dim_, weights_[k]});
    }
  }
  return Json{{"bins", kForecastBins},
              {"basis", kBinBasis},
              {"feature_dim", feature_dim_},
              {"weights", std::move(triples)}};
}

ToyPolicy ToyPolicy::FromJson(const Json& j) {
  if (j.at("bins").get<int>() != kForecastBins ||
      j.at("basis").get<int>() != kBinBasis) {
    throw Error("invalid_policy", "unexpected bin or basis count");
  }
  ToyPolicy policy(j.at("feature_dim").get<std::size_t>());
  for (const auto& t : j.at("weights")) {
    const auto row = t.at(0).get<std::size_t>();
    const auto col = t.at(1).get<std::size_t>();
    if (row >= kBinBasis || col >= policy.feature_dim_) {
      throw Error("invalid_policy", "weight index out of range");
    }
    policy.weights_[row * policy.feature_dim_ + col] = t.at(2).get<double>();
  }
  return policy;
}

EncodeResult EncodeExamples(std::span<const DpoExample> examples,
                            const PromptFeaturizer& featurizer) {
  EncodeResult out;
  for (const auto& e : examples) {
    auto chosen = ParseForecast(e.chosen);
    auto rejected = ParseForecast(e.rejected);
    if (!std::holds_alternative<ParsedForecast>(chosen) ||
        !std::holds_alternative<ParsedForecast>(rejected)) {
      ++out.unparsable;
      continue;
    }
    const int cb = ForecastBin(std::get<ParsedForecast>(chosen).probability);
    const int rb = ForecastBin(std::get<ParsedForecast>(rejected).probability);
    if (cb == rb) {
      ++out.same_bin;
      continue;
    }
    out.pairs.push_back(EncodedPair{featurizer.Features(e.prompt), cb, rb});
  }
  return out;
}

namespace {

PolicyLogProbs PairLogProbs(const std::vector<double>& theta,
                            const std::vector<double>& ref,
                            const EncodedPair& pair) {
  return PolicyLogProbs{.chosen_theta = theta[pair.chosen_bin],
                        .rejected_theta = theta[pair.rejected_bin],
                        .chosen_ref = ref[pair.chosen_bin],
                        .rejected_ref = ref[pair.rejected_bin]};
}

}  // namespace

double PairLoss(const ToyPolicy& policy, const ToyPolicy& reference,
                const EncodedPair& pair, double beta) {
  return DpoLoss(PairLogProbs(policy.LogProbabilities(pair.features),
                              reference.LogProbabilities(pair.features), pair),
                 beta);
}

double MeanLoss(const ToyPolicy& policy, const ToyPolicy& reference,
                std::span<const EncodedPair> pairs, double beta) {
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : pairs) total += PairLoss(policy, reference, p, beta);
  return total / static_cast<double>(pairs.size());
}

double AccumulatePairGradient(const ToyPolicy& policy, const ToyPolicy& reference,
                              const EncodedPair& pair, double beta,
                              std::span<double> grad) {
  const auto theta = policy.LogProbabilities(pair.features);
  const auto ref = reference.LogProbabilities(pair.features);
  const PolicyLogProbs lp = PairLogProbs(theta, ref, pair);
  const DpoGradient g = DpoGrad(lp, beta);
  // Chain rule through both log-softmax terms: d log p(bin) / d score_k is
  // basis_k(bin) - E_p[basis_k].
  std::vector<double> p(theta.size());
  for (std::size_t j = 0; j < p.size(); ++j) p[j] = std::exp(theta[j]);
  const auto e = ExpectedBasis(p);
  const auto& table = BasisTable();
  const std::size_t dim = policy.feature_dim();
  for (int k = 0; k < kBinBasis; ++k) {
    const double row_coef = g.chosen_theta * (table[pair.chosen_bin][k] - e[k]) +
                            g.rejected_theta * (table[pair.rejected_bin][k] - e[k]);
    double* row = grad.data() + k * dim;
    for (std::size_t i = 0; i < pair.features.index.size(); ++i) {
      row[pair.features.index[i]] += row_coef * pair.features.value[i];
    }
  }
  return DpoLoss(lp, beta);
}

std::string TrainingReport::ToJsonLines() const {
  std::string out;
  Json header = config.ToJson();
  header["type"] = "config";
  out += CanonicalDump(header) + "\n";
  for (const auto& e : epochs) {
    out += CanonicalDump(Json{{"type", "epoch"},
                              {"epoch", e.epoch},
                              {"train_loss", e.train_loss},
                              {"validation_loss", e.validation_loss},
                              {"learning_rate", e.learning_rate}}) +
           "\n";
  }
  Json summary{{"type", "summary"},
               {"train_pairs", train_pairs},
               {"validation_pairs", validation_pairs},
               {"skipped_pairs", skipped_pairs},
               {"initial_validation_loss", initial_validation_loss},
               {"plateau_epoch", plateau_epoch ? Json(*plateau_epoch) : Json()}};
  out += CanonicalDump(summary) + "\n";
  return out;
}

TrainResult TrainToy(std::span<const DpoExample> examples, const DpoConfig& config,
                     const PromptFeaturizer& featurizer) {
  config.Validate();
  EncodeResult encoded = EncodeExamples(examples, featurizer);
  if (encoded.pairs.empty()) {
    throw Error("empty_dataset", "no usable preference pairs");
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(encoded.pairs.size());
  std::iota(order.begin(), order.end(), 0);
  Shuffle(order, rng);
  std::size_t n_val = 0;
  if (order.size() >= 10) {
    n_val = static_cast<std::size_t>(config.validation_fraction *
                                     static_cast<double>(order.size()));
  }
  std::vector<EncodedPair> validation, train;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < n_val ? validation : train).push_back(encoded.pairs[order[k]]);
  }
  const std::span<const EncodedPair> monitor =
      validation.empty() ? std::span<const EncodedPair>(train) : validation;

  TrainResult result{.policy = ToyPolicy(featurizer.dim()),
                     .reference = ToyPolicy(featurizer.dim())};
  TrainingReport& report = result.report;
  report.config = config;
  report.train_pairs = train.size();
  report.validation_pairs = validation.size();
  report.skipped_pairs = encoded.unparsable + encoded.same_bin;
  report.initial_validation_loss =
      MeanLoss(result.policy, result.reference, monitor, config.beta);

  const std::size_t per_step =
      static_cast<std::size_t>(config.batch_size) * config.grad_accumulation;
  const std::size_t steps_per_epoch = (train.size() + per_step - 1) / per_step;
  const std::size_t total_steps = steps_per_epoch * config.epochs;

  std::vector<double> grad(result.policy.weights().size(), 0.0);
  std::vector<double> m1, m2;
  if (config.optimizer == Optimizer::kAdamW) {
    m1.assign(grad.size(), 0.0);
    m2.assign(grad.size(), 0.0);
  }
  std::size_t step = 0;
  double previous = report.initial_validation_loss;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    Shuffle(idx, rng);

    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t begin = 0; begin < idx.size(); begin += per_step) {
      const std::size_t end = std::min(idx.size(), begin + per_step);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = begin; k < end; ++k) {
        const double loss = AccumulatePairGradient(
            result.policy, result.reference, train[idx[k]], config.beta, grad);
        if (!std::isfinite(loss)) {
          throw Error("non_finite_loss", "epoch " + std::to_string(epoch));
        }
        loss_sum += loss;
      }
      const double inv = 1.0 / static_cast<double>(end - begin);
      lr = config.learning_rate *
           (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
      auto w = result.policy.weights();
      if (config.optimizer == Optimizer::kSgd) {
        for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * grad[k] * inv;
      } else {
        constexpr double kB1 = 0.9, kB2 = 0.999, kEps = 1e-8;
        const double t = static_cast<double>(step + 1);
        const double c1 = 1.0 - std::pow(kB1, t);
        const double c2 = 1.0 - std::pow(kB2, t);
        for (std::size_t k = 0; k < w.size(); ++k) {
          const double g = grad[k] * inv;
          m1[k] = kB1 * m1[k] + (1.0 - kB1) * g;
          m2[k] = kB2 * m2[k] + (1.0 - kB2) * g * g;
          w[k] -= lr * ((m1[k] / c1) / (std::sqrt(m2[k] / c2) + kEps) +
                        config.weight_decay * w[k]);
        }
      }
      ++step;
    }

    EpochStats stats{.epoch = epoch,
                     .train_loss = loss_sum / static_cast<double>(train.size()),
                     .learning_rate = lr};
    stats.validation_loss =
        MeanLoss(result.policy, result.reference, monitor, config.beta);
    if (!std::isfinite(stats.validation_loss)) {
      throw Error("non_finite_loss", "validation, epoch " + std::to_string(epoch));
    }
    if (!report.plateau_epoch && previous > 0.0 &&
        (previous - stats.validation_loss) / previous < config.plateau_tolerance) {
      report.plateau_epoch = epoch;
    }
    previous = stats.validation_loss;
    report.epochs.push_back(stats);
  }
  return result;
}

}  // namespace fdpo
