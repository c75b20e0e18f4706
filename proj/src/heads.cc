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

#include "debias/heads.h"

#include <cmath>
#include <random>
#include <stdexcept>

#include "debias/random.h"

namespace debias::heads {
namespace {

Tensor ScaledUniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(Shape{rows, cols});
  for (double& v : t.data()) v = u(rng);
  return t;
}

void CheckEmbedding(const ad::Var& z, std::size_t embedding_dim,
                    const char* who) {
  const Tensor& v = z.value();
  if (v.rank() != 2 || v.cols() != embedding_dim) {
    throw std::invalid_argument(std::string(who) + ": embedding has shape " +
                                ShapeString(v.shape()) + ", expected n x " +
                                std::to_string(embedding_dim));
  }
}

}  // namespace

BiasHeadBank BiasHeadBank::Init(std::size_t embedding_dim,
                                std::size_t label_dim, std::size_t n_domains,
                                std::uint64_t seed, double delta_scale) {
  Rng rng(seed);
  BiasHeadBank bank;
  bank.w_vw = ScaledUniform(embedding_dim + 1, label_dim, rng);
  std::uniform_real_distribution<double> u(-delta_scale, delta_scale);
  for (std::size_t i = 0; i < n_domains; ++i) {
    bank.alpha.push_back(Tensor::Filled({embedding_dim + 1, label_dim}, 1.0));
    Tensor d(Shape{embedding_dim + 1, label_dim});
    for (double& v : d.data()) v = u(rng);
    bank.delta.push_back(std::move(d));
  }
  return bank;
}

void BiasHeadBank::Validate() const {
  if (w_vw.rank() != 2 || w_vw.rows() < 2) {
    throw std::invalid_argument("bias heads: w_vw must be (E+1) x L");
  }
  if (alpha.size() != delta.size()) {
    throw std::invalid_argument("bias heads: alpha/delta count mismatch");
  }
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (alpha[i].shape() != w_vw.shape() || delta[i].shape() != w_vw.shape()) {
      throw std::invalid_argument("bias heads: domain " + std::to_string(i) +
                                  " head shape differs from w_vw");
    }
  }
}

Tensor BiasHeadBank::Composed(std::size_t domain) const {
  if (domain >= n_domains()) {
    throw std::out_of_range("bias heads: domain " + std::to_string(domain) +
                            " out of range (have " +
                            std::to_string(n_domains()) + ")");
  }
  Tensor w = w_vw;
  const std::size_t last = w.size() - w.cols();
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double a = (!scale_intercept && k >= last) ? 1.0 : alpha[domain][k];
    w[k] = a * w_vw[k] + delta[domain][k];
  }
  return w;
}

BoundHeads Bind(ad::Tape& tape, const BiasHeadBank& bank) {
  bank.Validate();
  BoundHeads b;
  b.bank = &bank;
  b.w_vw = tape.Leaf(bank.w_vw);
  for (std::size_t i = 0; i < bank.n_domains(); ++i) {
    b.alpha.push_back(tape.Leaf(bank.alpha[i]));
    b.delta.push_back(tape.Leaf(bank.delta[i]));
  }
  return b;
}

ad::Var VwLogits(const BoundHeads& heads, const ad::Var& z) {
  CheckEmbedding(z, heads.bank->embedding_dim(), "vw logits");
  return ad::Matmul(ad::AppendOnes(z), heads.w_vw);
}

ad::Var BiasLogits(const BoundHeads& heads, std::size_t domain,
                   const ad::Var& z) {
  if (domain >= heads.alpha.size()) {
    throw std::out_of_range("bias logits: domain " + std::to_string(domain) +
                            " out of range (have " +
                            std::to_string(heads.alpha.size()) + ")");
  }
  CheckEmbedding(z, heads.bank->embedding_dim(), "bias logits");
  ad::Tape& tape = *z.tape();
  ad::Var alpha = heads.alpha[domain];
  if (!heads.bank->scale_intercept) {
    // alpha_eff = alpha * mask + (1 - mask), mask zero on the intercept row.
    const Tensor& w = heads.bank->w_vw;
    Tensor mask = Tensor::Filled(w.shape(), 1.0);
    for (std::size_t c = 0; c < w.cols(); ++c) mask.at(w.rows() - 1, c) = 0.0;
    Tensor pinned = Tensor::ZerosLike(w);
    for (std::size_t c = 0; c < w.cols(); ++c) pinned.at(w.rows() - 1, c) = 1.0;
    alpha = ad::Add(ad::Multiply(alpha, tape.Constant(std::move(mask))),
                    tape.Constant(std::move(pinned)));
  }
  ad::Var w = ad::Add(ad::Multiply(alpha, heads.w_vw), heads.delta[domain]);
  return ad::Matmul(ad::AppendOnes(z), w);
}

ad::Var AdditiveBiasLogits(const BoundHeads& heads, std::size_t domain,
                           const ad::Var& z) {
  if (domain >= heads.delta.size()) {
    throw std::out_of_range("bias logits: domain " + std::to_string(domain) +
                            " out of range");
  }
  CheckEmbedding(z, heads.bank->embedding_dim(), "bias logits");
  return ad::Matmul(ad::AppendOnes(z),
                    ad::Add(heads.w_vw, heads.delta[domain]));
}

Tensor LinearLogits(const Tensor& z, const Tensor& w) {
  if (z.rank() != 2 || z.cols() + 1 != w.rows()) {
    throw std::invalid_argument("linear logits: embedding " +
                                ShapeString(z.shape()) + " vs head " +
                                ShapeString(w.shape()));
  }
  const std::size_t n = z.rows(), e = z.cols(), l = w.cols();
  Tensor out(Shape{n, l});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < l; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < e; ++k) s += z.at(i, k) * w.at(k, c);
      out.at(i, c) = s + w.at(e, c);
    }
  }
  return out;
}

DomainClassifier DomainClassifier::Init(std::size_t embedding_dim,
                                        std::size_t n_domains,
                                        std::uint64_t seed) {
  Rng rng(seed);
  return DomainClassifier{ScaledUniform(embedding_dim + 1, n_domains, rng)};
}

ad::Var DomainLogits(const ad::Var& phi, const ad::Var& z_detached) {
  const Tensor& p = phi.value();
  CheckEmbedding(z_detached, p.rows() - 1, "domain logits");
  return ad::Matmul(ad::AppendOnes(z_detached), phi);
}

}  // namespace debias::heads
