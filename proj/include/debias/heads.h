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

// Classifier heads on top of the embedding z.
//
// All heads act on [z, 1], so every weight matrix has embedding_dim + 1 rows
// and its last row is the intercept. The per-domain head is composed as
// w_i = alpha_i * w_vw + delta_i (elementwise); only w_vw is used at
// inference.

#ifndef DEBIAS_HEADS_H_
#define DEBIAS_HEADS_H_

#include <cstdint>
#include <vector>

#include "debias/autodiff.h"
#include "debias/tensor.h"

namespace debias::heads {

struct BiasHeadBank {
  Tensor w_vw;                // (E + 1) x L
  std::vector<Tensor> alpha;  // per domain, same shape, multiplicative
  std::vector<Tensor> delta;  // per domain, same shape, additive
  // When false the intercept row of alpha is pinned to 1.
  bool scale_intercept = true;

  // w_vw ~ scaled uniform, alpha = 1, delta ~ U(-delta_scale, delta_scale).
  static BiasHeadBank Init(std::size_t embedding_dim, std::size_t label_dim,
                           std::size_t n_domains, std::uint64_t seed,
                           double delta_scale = 1e-2);

  std::size_t n_domains() const { return alpha.size(); }
  std::size_t embedding_dim() const { return w_vw.rows() - 1; }
  std::size_t label_dim() const { return w_vw.cols(); }

  // Composed head of domain i as a plain tensor.
  Tensor Composed(std::size_t domain) const;
  void Validate() const;
};

struct BoundHeads {
  const BiasHeadBank* bank = nullptr;
  ad::Var w_vw;
  std::vector<ad::Var> alpha;
  std::vector<ad::Var> delta;
};

BoundHeads Bind(ad::Tape& tape, const BiasHeadBank& bank);

// [Z, 1] . w_vw
ad::Var VwLogits(const BoundHeads& heads, const ad::Var& z);
// [Z, 1] . (alpha_i * w_vw + delta_i); `domain` is 0-based.
ad::Var BiasLogits(const BoundHeads& heads, std::size_t domain,
                   const ad::Var& z);
// Additive-only variant: [Z, 1] . (w_vw + delta_i).
ad::Var AdditiveBiasLogits(const BoundHeads& heads, std::size_t domain,
                           const ad::Var& z);

// Plain-tensor evaluation for inference.
Tensor LinearLogits(const Tensor& z, const Tensor& w);

struct DomainClassifier {
  Tensor phi;  // (E + 1) x N

  static DomainClassifier Init(std::size_t embedding_dim, std::size_t n_domains,
                               std::uint64_t seed);
  std::size_t n_domains() const { return phi.cols(); }
};

// [Z, 1] . phi. Callers hand in a detached embedding so that gradients of any
// loss on these logits stop at the embedding.
ad::Var DomainLogits(const ad::Var& phi, const ad::Var& z_detached);

}  // namespace debias::heads

#endif  // DEBIAS_HEADS_H_
