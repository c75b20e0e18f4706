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

// Scalar training objectives.
//
// Per-sample losses inside one domain are averaged; domains are then combined
// according to DomainWeighting:
//   kEqual        mean over non-empty domains of the per-domain means
//   kProportional sum_i (n_i / n) * mean_i, i.e. the pooled batch mean
//   kSum          sum_i n_i * mean_i, the raw double sum over samples

#ifndef DEBIAS_LOSSES_H_
#define DEBIAS_LOSSES_H_

#include <span>
#include <string>
#include <vector>

#include "debias/autodiff.h"
#include "debias/heads.h"
#include "debias/tensor.h"

namespace debias::loss {

enum class TaskMode { kSoftmaxCe, kMultilabelBce };
enum class DomainWeighting { kEqual, kProportional, kSum };

TaskMode ParseTaskMode(const std::string& s);
std::string ToString(TaskMode m);
DomainWeighting ParseDomainWeighting(const std::string& s);
std::string ToString(DomainWeighting w);

struct LossWeights {
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 1.0;
  double lambda = 0.1;
  double gamma = 0.1;

  void Validate() const;
};

// Rejects targets outside the label domain: rows of probabilities (softmax;
// one-hot is the usual case, mixup produces soft rows) or entries in [0, 1]
// (multi-label).
void ValidateTargets(const Tensor& targets, TaskMode mode);

// Mean over rows. Softmax mode: -sum_c y_c log softmax(l)_c. Multi-label:
// sum over labels of binary cross-entropy.
ad::Var TaskLoss(const ad::Var& logits, const Tensor& targets, TaskMode mode);

// Combines per-domain mean losses. Domains with count 0 are skipped.
ad::Var CombineDomains(std::span<const ad::Var> per_domain_means,
                       std::span<const std::size_t> counts,
                       DomainWeighting weighting);

// Task loss of `logits` with rows partitioned by domain.
ad::Var DomainWeightedTaskLoss(const ad::Var& logits, const Tensor& targets,
                               std::span<const std::vector<std::size_t>> rows,
                               TaskMode mode, DomainWeighting weighting);

// Separately evaluated pieces of an objective. Each term is already
// multiplied by its trade-off weight, so total is their plain sum.
struct ObjectiveTerms {
  ad::Var total;
  ad::Var label_vw;    // C1 * L_y(w_vw z, y)
  ad::Var label_bias;  // C2 * L_y(w_i z, y)
  ad::Var reg_vw;      // ||w_vw||^2 (1/2 for the hinge objective)
  ad::Var reg_delta;   // lambda * sum ||delta_i||^2
  ad::Var reg_alpha;   // gamma * sum ||alpha_i - 1||^2
};

// Cross-entropy objective with multiplicative and additive per-domain bias:
//   ||w_vw||^2 + sum_i (lambda ||delta_i||^2 + gamma ||alpha_i - 1||^2)
//   + C1 sum_i L(w_vw z_i, y_i) + C2 sum_i L(w_i z_i, y_i)
// with the sums over samples taken according to `weighting`. z[i] and y[i]
// hold domain i's rows; an empty domain contributes no label terms.
ObjectiveTerms BiasRegObjective(const heads::BoundHeads& heads,
                                std::span<const ad::Var> z,
                                std::span<const Tensor> y,
                                const LossWeights& weights, TaskMode mode,
                                DomainWeighting weighting);

// Hinge objective with additive-only bias (alpha fixed at 1):
//   1/2 ||w_vw||^2 + lambda/2 sum ||delta_i||^2
//   + C1 sum hinge(y w_vw z) + C2 sum hinge(y w_i z)
// Labels are +-1, one column per output (one-vs-rest for several outputs).
ObjectiveTerms SvmObjective(const heads::BoundHeads& heads,
                            std::span<const ad::Var> z,
                            std::span<const Tensor> y_pm,
                            const LossWeights& weights,
                            DomainWeighting weighting);

// {0,1} or one-hot targets to +-1 columns. Single-column binary labels stay
// one column.
Tensor ToPlusMinus(const Tensor& targets);
void ValidatePlusMinus(const Tensor& y);

}  // namespace debias::loss

#endif  // DEBIAS_LOSSES_H_
