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

#include "debias/losses.h"

#include <cmath>
#include <stdexcept>

namespace debias::loss {
namespace {

constexpr double kTargetTolerance = 1e-9;

ad::Var Zero(ad::Tape& tape) { return tape.Constant(Tensor::Scalar(0.0)); }

void CheckDomains(std::span<const ad::Var> z, std::size_t n_targets,
                  const heads::BoundHeads& heads) {
  if (z.size() != n_targets) {
    throw std::invalid_argument("objective: " + std::to_string(z.size()) +
                                " embedding batches but " +
                                std::to_string(n_targets) + " label batches");
  }
  if (z.size() != heads.delta.size()) {
    throw std::invalid_argument("objective: " + std::to_string(z.size()) +
                                " domain batches for " +
                                std::to_string(heads.delta.size()) +
                                " domain heads");
  }
  if (z.empty()) throw std::invalid_argument("objective: no domains");
}

}  // namespace

TaskMode ParseTaskMode(const std::string& s) {
  if (s == "softmax-ce") return TaskMode::kSoftmaxCe;
  if (s == "multilabel-bce") return TaskMode::kMultilabelBce;
  throw std::invalid_argument("unknown task mode '" + s + "'");
}

std::string ToString(TaskMode m) {
  return m == TaskMode::kSoftmaxCe ? "softmax-ce" : "multilabel-bce";
}

DomainWeighting ParseDomainWeighting(const std::string& s) {
  if (s == "equal") return DomainWeighting::kEqual;
  if (s == "proportional") return DomainWeighting::kProportional;
  if (s == "sum") return DomainWeighting::kSum;
  throw std::invalid_argument("unknown domain weighting '" + s + "'");
}

std::string ToString(DomainWeighting w) {
  switch (w) {
    case DomainWeighting::kEqual: return "equal";
    case DomainWeighting::kProportional: return "proportional";
    case DomainWeighting::kSum: return "sum";
  }
  return "equal";
}

void LossWeights::Validate() const {
  for (double v : {c1, c2, c3, lambda, gamma}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(
          "loss weights: C1, C2, C3, lambda, gamma must be finite and >= 0");
    }
  }
}

void ValidateTargets(const Tensor& targets, TaskMode mode) {
  if (targets.rank() != 2) {
    throw std::invalid_argument("targets must be a matrix, got " +
                                ShapeString(targets.shape()));
  }
  for (std::size_t r = 0; r < targets.rows(); ++r) {
    double s = 0.0;
    for (double v : targets.row(r)) {
      if (!(v >= -kTargetTolerance && v <= 1.0 + kTargetTolerance)) {
        throw std::invalid_argument("label " + std::to_string(v) + " in row " +
                                    std::to_string(r) + " outside [0, 1]");
      }
      s += v;
    }
    if (mode == TaskMode::kSoftmaxCe && std::abs(s - 1.0) > 1e-6) {
      throw std::invalid_argument("softmax targets in row " +
                                  std::to_string(r) + " sum to " +
                                  std::to_string(s) + ", expected 1");
    }
  }
}

ad::Var TaskLoss(const ad::Var& logits, const Tensor& targets, TaskMode mode) {
  const Tensor& l = logits.value();
  if (l.shape() != targets.shape()) {
    throw std::invalid_argument("task loss: logits " + ShapeString(l.shape()) +
                                " vs targets " +
                                ShapeString(targets.shape()));
  }
  if (l.rows() == 0) throw std::invalid_argument("task loss: empty batch");
  ValidateTargets(targets, mode);
  ad::Tape& tape = *logits.tape();
  const double inv_n = 1.0 / static_cast<double>(l.rows());
  ad::Var y = tape.Constant(targets);
  if (mode == TaskMode::kSoftmaxCe) {
    ad::Var log_p = ad::Log(ad::Softmax(logits));
    return ad::Scale(ad::Sum(ad::Multiply(y, log_p)), -inv_n);
  }
  ad::Var p = ad::Sigmoid(logits);
  ad::Var one = tape.Constant(Tensor::Scalar(1.0));
  ad::Var pos = ad::Multiply(y, ad::Log(p));
  ad::Var neg = ad::Multiply(ad::Subtract(one, y), ad::Log(ad::Subtract(one, p)));
  return ad::Scale(ad::Sum(ad::Add(pos, neg)), -inv_n);
}

ad::Var CombineDomains(std::span<const ad::Var> per_domain_means,
                       std::span<const std::size_t> counts,
                       DomainWeighting weighting) {
  if (per_domain_means.size() != counts.size()) {
    throw std::invalid_argument("combine domains: size mismatch");
  }
  std::size_t total = 0, present = 0;
  ad::Tape* tape = nullptr;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    total += counts[i];
    if (counts[i] > 0) {
      ++present;
      tape = per_domain_means[i].tape();
    }
  }
  if (present == 0) throw std::invalid_argument("combine domains: all empty");
  ad::Var acc;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) continue;
    double w = 1.0;
    switch (weighting) {
      case DomainWeighting::kEqual:
        w = 1.0 / static_cast<double>(present);
        break;
      case DomainWeighting::kProportional:
        w = static_cast<double>(counts[i]) / static_cast<double>(total);
        break;
      case DomainWeighting::kSum:
        w = static_cast<double>(counts[i]);
        break;
    }
    ad::Var term = ad::Scale(per_domain_means[i], w);
    acc = acc.valid() ? ad::Add(acc, term) : term;
  }
  (void)tape;
  return acc;
}

ad::Var DomainWeightedTaskLoss(const ad::Var& logits, const Tensor& targets,
                               std::span<const std::vector<std::size_t>> rows,
                               TaskMode mode, DomainWeighting weighting) {
  std::vector<ad::Var> means;
  std::vector<std::size_t> counts;
  for (const auto& r : rows) {
    counts.push_back(r.size());
    if (r.empty()) {
      means.emplace_back();
      continue;
    }
    means.push_back(TaskLoss(ad::RowSelect(logits, r), SelectRows(targets, r),
                             mode));
  }
  return CombineDomains(means, counts, weighting);
}

ObjectiveTerms BiasRegObjective(const heads::BoundHeads& heads,
                                std::span<const ad::Var> z,
                                std::span<const Tensor> y,
                                const LossWeights& weights, TaskMode mode,
                                DomainWeighting weighting) {
  weights.Validate();
  CheckDomains(z, y.size(), heads);
  ad::Tape& tape = *heads.w_vw.tape();
  std::vector<ad::Var> vw_means, bias_means;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const std::size_t n = z[i].value().rows();
    counts.push_back(n);
    if (n == 0) {
      vw_means.emplace_back();
      bias_means.emplace_back();
      continue;
    }
    vw_means.push_back(TaskLoss(heads::VwLogits(heads, z[i]), y[i], mode));
    bias_means.push_back(
        TaskLoss(heads::BiasLogits(heads, i, z[i]), y[i], mode));
  }
  ObjectiveTerms t;
  t.label_vw = ad::Scale(CombineDomains(vw_means, counts, weighting), weights.c1);
  t.label_bias =
      ad::Scale(CombineDomains(bias_means, counts, weighting), weights.c2);
  t.reg_vw = ad::SquaredNorm(heads.w_vw);
  ad::Var one = tape.Constant(Tensor::Scalar(1.0));
  ad::Var delta_sum = Zero(tape), alpha_sum = Zero(tape);
  for (std::size_t i = 0; i < heads.delta.size(); ++i) {
    delta_sum = ad::Add(delta_sum, ad::SquaredNorm(heads.delta[i]));
    alpha_sum = ad::Add(
        alpha_sum, ad::SquaredNorm(ad::Subtract(heads.alpha[i], one)));
  }
  t.reg_delta = ad::Scale(delta_sum, weights.lambda);
  t.reg_alpha = ad::Scale(alpha_sum, weights.gamma);
  t.total = ad::Add(ad::Add(ad::Add(t.label_vw, t.label_bias),
                            ad::Add(t.reg_vw, t.reg_delta)),
                    t.reg_alpha);
  return t;
}

void ValidatePlusMinus(const Tensor& y) {
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (y[k] != 1.0 && y[k] != -1.0) {
      throw std::invalid_argument("hinge labels must be -1 or +1, got " +
                                  std::to_string(y[k]));
    }
  }
}

Tensor ToPlusMinus(const Tensor& targets) {
  Tensor y = targets;
  for (double& v : y.data()) {
    if (v != 0.0 && v != 1.0) {
      throw std::invalid_argument("hinge labels need hard {0,1} targets, got " +
                                  std::to_string(v));
    }
    v = 2.0 * v - 1.0;
  }
  return y;
}

ObjectiveTerms SvmObjective(const heads::BoundHeads& heads,
                            std::span<const ad::Var> z,
                            std::span<const Tensor> y_pm,
                            const LossWeights& weights,
                            DomainWeighting weighting) {
  weights.Validate();
  CheckDomains(z, y_pm.size(), heads);
  ad::Tape& tape = *heads.w_vw.tape();
  std::vector<ad::Var> vw_means, bias_means;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const std::size_t n = z[i].value().rows();
    counts.push_back(n);
    if (n == 0) {
      vw_means.emplace_back();
      bias_means.emplace_back();
      continue;
    }
    ValidatePlusMinus(y_pm[i]);
    ad::Var y = tape.Constant(y_pm[i]);
    const double inv_n = 1.0 / static_cast<double>(n);
    ad::Var m_vw = ad::Multiply(y, heads::VwLogits(heads, z[i]));
    ad::Var m_b = ad::Multiply(y, heads::AdditiveBiasLogits(heads, i, z[i]));
    vw_means.push_back(ad::Scale(ad::Sum(ad::Hinge(m_vw)), inv_n));
    bias_means.push_back(ad::Scale(ad::Sum(ad::Hinge(m_b)), inv_n));
  }
  ObjectiveTerms t;
  t.label_vw = ad::Scale(CombineDomains(vw_means, counts, weighting), weights.c1);
  t.label_bias =
      ad::Scale(CombineDomains(bias_means, counts, weighting), weights.c2);
  t.reg_vw = ad::Scale(ad::SquaredNorm(heads.w_vw), 0.5);
  ad::Var delta_sum = Zero(tape);
  for (const ad::Var& d : heads.delta) {
    delta_sum = ad::Add(delta_sum, ad::SquaredNorm(d));
  }
  t.reg_delta = ad::Scale(delta_sum, 0.5 * weights.lambda);
  t.reg_alpha = Zero(tape);
  t.total = ad::Add(ad::Add(ad::Add(t.label_vw, t.label_bias),
                            ad::Add(t.reg_vw, t.reg_delta)),
                    t.reg_alpha);
  return t;
}

}  // namespace debias::loss
