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

#ifndef FDPO_DPO_CORE_H_
#define FDPO_DPO_CORE_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fdpo/io.h"
#include "fdpo/reranker.h"

namespace fdpo {

enum class Optimizer { kSgd, kAdamW };

struct DpoConfig {
  double beta = 0.1;
  double learning_rate = 5e-5;  // peak of the linear decay schedule
  int epochs = 1;
  int batch_size = 2;
  int grad_accumulation = 4;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::kSgd;
  double weight_decay = 0.0;        // AdamW only
  double plateau_tolerance = 0.005;  // relative epoch-over-epoch improvement
  double validation_fraction = 0.1;

  // Throws ConfigError on non-positive beta, learning rate, batch size or
  // accumulation, or negative epochs.
  void Validate() const;
  Json ToJson() const;
  static DpoConfig FromJson(const Json& j);  // missing keys keep defaults
};

// Sequence log-probabilities under the trainable policy (theta) and the frozen
// reference.
struct PolicyLogProbs {
  double chosen_theta = 0.0;
  double rejected_theta = 0.0;
  double chosen_ref = 0.0;
  double rejected_ref = 0.0;

  // Implicit-reward margin (chosen advantage minus rejected advantage).
  double Margin() const {
    return (chosen_theta - chosen_ref) - (rejected_theta - rejected_ref);
  }
};

// log(sigmoid(x)) without overflow for large |x|.
double LogSigmoid(double x);
double Sigmoid(double x);

// -log sigmoid(beta * margin). Throws Error("non_finite_input") for NaN/inf
// inputs and ConfigError for beta <= 0.
double DpoLoss(const PolicyLogProbs& lp, double beta);

struct DpoGradient {
  double chosen_theta = 0.0;
  double rejected_theta = 0.0;
  double chosen_ref = 0.0;    // always 0: the reference is frozen
  double rejected_ref = 0.0;  // always 0
};

// d/d chosen_theta = -beta * sigmoid(-beta * margin), and the negation for
// rejected_theta.
DpoGradient DpoGrad(const PolicyLogProbs& lp, double beta);

// Sparse prompt features: a bias (index 0, value 1) plus hashed token counts
// of lowercase alphanumeric tokens weighted log(1 + count), L2-normalised over
// the token part.
struct SparseFeatures {
  std::vector<std::uint32_t> index;
  std::vector<double> value;
};

class PromptFeaturizer {
 public:
  explicit PromptFeaturizer(std::size_t hashed_dims = 512)
      : hashed_dims_(hashed_dims) {}

  SparseFeatures Features(std::string_view prompt) const;
  std::size_t dim() const { return hashed_dims_ + 1; }
  std::size_t hashed_dims() const { return hashed_dims_; }

 private:
  std::size_t hashed_dims_;
};

// Forecast bins 0.00, 0.01, ..., 1.00.
inline constexpr int kForecastBins = 101;
int ForecastBin(double probability);
inline double BinValue(int bin) { return bin / 100.0; }

// Each bin is embedded by a small fixed basis (Legendre polynomials P1..P4 of
// 2v - 1) so that evidence about one bin moves its neighbours too.
inline constexpr int kBinBasis = 4;
double BinBasis(int bin, int k);

// Log-linear (linear-softmax) categorical policy over forecast bins:
// logit_b = sum_k basis_k(b) * (W_k . phi). Zero weights give the uniform
// distribution.
class ToyPolicy {
 public:
  ToyPolicy() : ToyPolicy(PromptFeaturizer().dim()) {}
  explicit ToyPolicy(std::size_t feature_dim);

  std::size_t feature_dim() const { return feature_dim_; }
  std::span<double> weights() { return weights_; }
  std::span<const double> weights() const { return weights_; }

  std::vector<double> Logits(const SparseFeatures& phi) const;
  std::vector<double> LogProbabilities(const SparseFeatures& phi) const;
  std::vector<double> Probabilities(const SparseFeatures& phi) const;
  double LogProb(const SparseFeatures& phi, int bin) const;
  // Mean of the bin values under the policy.
  double ExpectedForecast(const SparseFeatures& phi) const;

  // grad += coef * d log pi(bin | phi) / dW.
  void AccumulateLogProbGradient(const SparseFeatures& phi, int bin,
                                 double coef, std::span<double> grad) const;

  bool operator==(const ToyPolicy& other) const = default;

  // Nonzero weights only, as [row, col, value] triples.
  Json ToJson() const;
  static ToyPolicy FromJson(const Json& j);

 private:
  std::size_t feature_dim_;
  std::vector<double> weights_;  // kBinBasis x feature_dim_, row-major
};

// A dataset example reduced to what the toy policy sees.
struct EncodedPair {
  SparseFeatures features;
  int chosen_bin = 0;
  int rejected_bin = 0;
};

struct EncodeResult {
  std::vector<EncodedPair> pairs;
  std::size_t unparsable = 0;  // a completion had no forecast
  std::size_t same_bin = 0;    // both completions land in one bin
};

// Completions are mapped to bins through the forecast parser.
EncodeResult EncodeExamples(std::span<const DpoExample> examples,
                            const PromptFeaturizer& featurizer);

// DPO loss of one pair for `policy` against `reference`.
double PairLoss(const ToyPolicy& policy, const ToyPolicy& reference,
                const EncodedPair& pair, double beta);
double MeanLoss(const ToyPolicy& policy, const ToyPolicy& reference,
                std::span<const EncodedPair> pairs, double beta);

// grad += d PairLoss / dW; returns the loss.
double AccumulatePairGradient(const ToyPolicy& policy, const ToyPolicy& reference,
                              const EncodedPair& pair, double beta,
                              std::span<double> grad);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;       // mean loss over the epoch, pre-update
  double validation_loss = 0.0;  // after the epoch
  double learning_rate = 0.0;    // at the epoch's last step
};

struct TrainingReport {
  DpoConfig config;
  std::size_t train_pairs = 0;
  std::size_t validation_pairs = 0;
  std::size_t skipped_pairs = 0;
  double initial_validation_loss = 0.0;
  std::vector<EpochStats> epochs;
  std::optional<int> plateau_epoch;

  // One header line, one line per epoch, one summary line.
  std::string ToJsonLines() const;
};

struct TrainResult {
  ToyPolicy policy;
  ToyPolicy reference;
  TrainingReport report;
};

// Trains a zero-initialised policy with the DPO objective against a frozen
// copy of the initialisation. A seeded validation split (validation_fraction
// of the pairs, none when fewer than 10) drives plateau detection; without
// one, the training loss is used. Throws Error("empty_dataset") when no pair
// is usable and Error("non_finite_loss") if the loss diverges.
TrainResult TrainToy(std::span<const DpoExample> examples, const DpoConfig& config,
                     const PromptFeaturizer& featurizer = PromptFeaturizer());

}  // namespace fdpo

#endif  // FDPO_DPO_CORE_H_
