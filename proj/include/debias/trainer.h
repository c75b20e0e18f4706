// Copyright 2026 The debias-dg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Training strategies over a multi-domain batch.
//
// kMct trains the feature extractor, the visual-world head and the per-domain
// bias heads on the bias-regularized objective plus a label loss on embeddings
// re-entered from a perturbed activation at a randomly chosen tap. The
// perturbation follows the gradient of a linear domain classifier that only
// ever sees detached embeddings. kCrossgrad is the same step restricted to
// the input tap. The remaining strategies are the usual baselines. Every
// strategy also fits the domain classifier on detached embeddings so the
// stop-gradient property can be checked uniformly (kDann instead routes the
// domain loss through a gradient-reversal node).
//
// All updates are plain SGD computed from one forward pass.

#ifndef DEBIAS_TRAINER_H_
#define DEBIAS_TRAINER_H_

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "debias/autodiff.h"
#include "debias/heads.h"
#include "debias/losses.h"
#include "debias/network.h"
#include "debias/random.h"
#include "debias/tensor.h"

namespace debias::train {

enum class Strategy { kMct, kErm, kMixup, kCrossgrad, kDann, kE2eSvm, kE2eCe };

Strategy ParseStrategy(const std::string& s);
std::string ToString(Strategy s);
const std::vector<Strategy>& AllStrategies();
// Strategies that carry per-domain bias heads and need >= 2 domains.
bool UsesBiasHeads(Strategy s);

struct TrainConfig {
  Strategy strategy = Strategy::kMct;
  double epsilon = 1.0;
  double eta = 0.05;
  std::size_t steps = 5000;
  std::size_t batch_size = 64;
  loss::LossWeights weights;
  loss::TaskMode task_mode = loss::TaskMode::kSoftmaxCe;
  loss::DomainWeighting weighting = loss::DomainWeighting::kEqual;
  // Empty means {"input", last tap}.
  std::vector<std::string> taps;
  std::uint64_t seed = 1;
  double mixup_alpha = 0.2;
  double dann_weight = 1.0;
  // Multiplies the domain-classifier loss in the phi update.
  double domain_weight = 1.0;
  // Extra ||w_vw||^2 weight for the strategies without bias heads.
  double vw_l2 = 0.0;
  // Shrinks feature-extractor weights (not biases) by eta * weight_decay
  // before each gradient step.
  double weight_decay = 0.0;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t embedding_dim = 32;
  bool scale_intercept = true;
  bool freeze_bias_heads = false;
  // When true the domain-perturbed activation stays connected to the layers
  // before the tap, so they also receive the augmented label gradient.
  bool augment_through_prefix = true;
  // Scales epsilon by the root-mean-square of the tapped activation.
  bool per_tap_epsilon_scaling = false;
  // Records max |d L_domain / d theta| per step (costs one extra sweep).
  bool check_stop_gradient = false;
  std::size_t eval_every = 0;

  void Validate() const;
};

// Training rows of one domain; y is one-hot (softmax) or multi-hot.
struct DomainData {
  Tensor x;
  Tensor y;
};

struct DomainBatch {
  Tensor x;
  Tensor y;
  std::vector<std::size_t> domain;  // 0-based
};

// Row indices of `batch` for each domain.
std::vector<std::vector<std::size_t>> RowsByDomain(const DomainBatch& batch,
                                                   std::size_t n_domains);

// Uniform with replacement inside each domain; the batch is split as evenly
// as possible over domains so every domain appears when batch_size >= N.
DomainBatch SampleBatch(std::span<const DomainData> domains,
                        std::size_t batch_size, Rng& rng);

struct TrainState {
  net::LayeredNet net;
  heads::BiasHeadBank heads;
  heads::DomainClassifier domain;
};

TrainState InitState(const TrainConfig& config, std::size_t input_dim,
                     std::size_t label_dim, std::size_t n_domains);

struct StepMetrics {
  std::size_t step = 0;
  double l_vw = 0.0;
  double l_bias = 0.0;
  double l_aug = 0.0;
  double r_wvw = 0.0;
  double r_delta = 0.0;
  double r_alpha = 0.0;
  double l_domain = 0.0;
  double total = 0.0;
  std::string tap;
  // Root-mean-square of the tapped activation and of the domain shift added
  // to it (augmenting strategies only).
  double tap_rms = 0.0;
  double shift_rms = 0.0;
  std::size_t skipped_domains = 0;
  // max |d L_domain / d theta|; only filled when check_stop_gradient is set.
  double domain_grad_theta = 0.0;
};

// Links an embedding to the detached copy fed to the domain classifier, so
// that gradients of the domain loss can be carried back to an activation as
// data while the tape itself keeps them away from the feature extractor.
struct StopGradientLink {
  ad::Var z;
  ad::Var z_detached;
};

// d loss / d q, crossing `link` when the loss only sees the detached copy.
ad::ActivationGradient GradAtActivation(const ad::Tape& tape,
                                        const ad::Var& loss, const ad::Var& q,
                                        const StopGradientLink* link);

struct AugmentedPair {
  std::string tap;
  Tensor domain_shift;  // epsilon * d L_d / d Q
  Tensor label_shift;   // epsilon * d L_y / d Q
  Tensor q_bar;         // Q + domain_shift
  Tensor q_tilde;       // Q + label_shift
  bool domain_reachable = false;
  bool label_reachable = false;
};

// Both perturbed activations are plain tensors: nothing differentiates
// through the perturbation direction.
AugmentedPair MctPerturb(const ad::Tape& tape, const ad::Var& label_loss,
                         const ad::Var& domain_loss, const ad::Var& q,
                         double epsilon,
                         const StopGradientLink* link = nullptr);

// Random streams used inside a step, independent from batch sampling.
struct StepRngs {
  Rng tap;
  Rng mix;
};
StepRngs MakeStepRngs(std::uint64_t seed);

StepMetrics MctStep(TrainState& state, const DomainBatch& batch,
                    const TrainConfig& config, StepRngs& rngs);
StepMetrics CrossgradStep(TrainState& state, const DomainBatch& batch,
                          const TrainConfig& config, StepRngs& rngs);
StepMetrics E2eCeStep(TrainState& state, const DomainBatch& batch,
                      const TrainConfig& config);
StepMetrics E2eSvmStep(TrainState& state, const DomainBatch& batch,
                       const TrainConfig& config);
StepMetrics ErmStep(TrainState& state, const DomainBatch& batch,
                    const TrainConfig& config);
StepMetrics MixupStep(TrainState& state, const DomainBatch& batch,
                      const TrainConfig& config, StepRngs& rngs);
StepMetrics DannStep(TrainState& state, const DomainBatch& batch,
                     const TrainConfig& config);
// Dispatches on config.strategy.
StepMetrics TrainStep(TrainState& state, const DomainBatch& batch,
                      const TrainConfig& config, StepRngs& rngs);

// x' = beta x_a + (1 - beta) x_b, y' likewise.
void MixRows(std::span<const double> a, std::span<const double> b, double beta,
             std::span<double> out);

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t step, const std::string& what);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct ValidationPoint {
  std::size_t step = 0;
  double score = 0.0;
};

struct TrainResult {
  TrainState state;
  std::vector<StepMetrics> history;
  std::vector<ValidationPoint> validation;
};

// Runs config.steps steps. `validation`, when given, is scored with the
// visual-world head every eval_every steps and after the last step.
TrainResult Train(const TrainConfig& config,
                  std::span<const DomainData> domains,
                  const DomainData* validation = nullptr,
                  const TrainState* initial = nullptr);

// Visual-world head predictions on plain tensors.
Tensor PredictVw(const TrainState& state, const Tensor& x);
// Domain-i bias head predictions.
Tensor PredictBias(const TrainState& state, std::size_t domain,
                   const Tensor& x);

// History CSV: step, L_vw, L_bias, L_aug, R_wvw, R_delta, R_alpha, L_domain,
// total, tap.
std::string HistoryCsv(std::span<const StepMetrics> history);

}  // namespace debias::train

#endif  // DEBIAS_TRAINER_H_
