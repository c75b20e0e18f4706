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

#include "debias/network.h"
#include "gtest/gtest.h"
#include "oracles.h"

namespace debias::heads {
namespace {

using ::debias::testing::NumericGradient;
using ::debias::testing::RandomTensor;
using ::debias::testing::RelativeError;
using ::debias::testing::RowSoftmaxCrossEntropy;

BiasHeadBank OneDomainBank(Tensor w_vw, Tensor alpha, Tensor delta) {
  BiasHeadBank bank;
  bank.w_vw = std::move(w_vw);
  bank.alpha.push_back(std::move(alpha));
  bank.delta.push_back(std::move(delta));
  return bank;
}

BiasHeadBank RandomBank(std::mt19937_64& rng, std::size_t e, std::size_t l,
                        std::size_t n) {
  BiasHeadBank bank;
  bank.w_vw = RandomTensor(rng, {e + 1, l});
  for (std::size_t i = 0; i < n; ++i) {
    bank.alpha.push_back(RandomTensor(rng, {e + 1, l}));
    bank.delta.push_back(RandomTensor(rng, {e + 1, l}));
  }
  return bank;
}

TEST(VwLogitsTest, ZeroWeightsGiveZeroLogits) {
  std::mt19937_64 rng(1);
  BiasHeadBank bank = BiasHeadBank::Init(3, 2, 2, 5);
  bank.w_vw = Tensor::ZerosLike(bank.w_vw);
  ad::Tape tape;
  BoundHeads h = Bind(tape, bank);
  const Tensor out = VwLogits(h, tape.Constant(RandomTensor(rng, {4, 3}))).value();
  EXPECT_EQ(out, Tensor::Zeros({4, 2}));
}

TEST(VwLogitsTest, DirectArithmetic) {
  BiasHeadBank bank = OneDomainBank(Tensor::Matrix({{1}, {2}, {0}}),
                                    Tensor::Filled({3, 1}, 1.0),
                                    Tensor::Zeros({3, 1}));
  ad::Tape tape;
  BoundHeads h = Bind(tape, bank);
  EXPECT_EQ(VwLogits(h, tape.Constant(Tensor::Matrix({{1, 1}}))).value(),
            Tensor::Matrix({{3}}));
}

TEST(VwLogitsTest, GradientOfSumIsColumnSumsOfAugmentedInput) {
  std::mt19937_64 rng(2);
  BiasHeadBank bank = RandomBank(rng, 4, 3, 2);
  const Tensor z = RandomTensor(rng, {5, 4});
  ad::Tape tape;
  BoundHeads h = Bind(tape, bank);
  const Tensor g = tape.Gradient(ad::Sum(VwLogits(h, tape.Constant(z))), h.w_vw);
  for (std::size_t r = 0; r <= 4; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < 5; ++i) s += r < 4 ? z.at(i, r) : 1.0;
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(g.at(r, c), s, 1e-12);
  }
  auto f = [&](const Tensor& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      for (double v : testing::RowLinear(z.row(i), w)) s += v;
    }
    return s;
  };
  EXPECT_LT(RelativeError(g, NumericGradient(f, bank.w_vw)), 1e-8);
}

TEST(VwLogitsTest, DimensionMismatchRejected) {
  BiasHeadBank bank = BiasHeadBank::Init(3, 2, 2, 5);
  ad::Tape tape;
  BoundHeads h = Bind(tape, bank);
  EXPECT_THROW(VwLogits(h, tape.Constant(Tensor::Zeros({2, 4}))),
               std::invalid_argument);
}

TEST(BiasLogitsTest, DirectArithmetic) {
  BiasHeadBank bank = OneDomainBank(Tensor::Matrix({{1}, {2}, {0}}),
                                    Tensor::Matrix({{2}, {0.5}, {1}}),
                                    Tensor::Matrix({{0.1}, {-0.2}, {0}}));
  const Tensor w = bank.Composed(0);
  EXPECT_NEAR(w.at(0, 0), 2.1, 1e-15);
  EXPECT_NEAR(w.at(1, 0), 0.8, 1e-15);
  EXPECT_EQ(w.at(2, 0), 0.0);
  ad::Tape tape;
  BoundHeads h = Bind(tape, bank);
  EXPECT_NEAR(
      BiasLogits(h, 0, tape.Constant(Tensor::Matrix({{1, 1}}))).value().item(),
      2.9, 1e-15);
}

TEST(BiasLogitsTest, ZeroScaleLeavesOffsetOnly) {
  std::mt19937_64 rng(3);
  BiasHeadBank bank = RandomBank(rng, 3, 2, 1);
  bank.alpha[0] = Tensor::ZerosLike(bank.w_vw);
  const Tensor z = RandomTensor(rng, {4, 3});
  ad::Tape tape;
  BoundHeads h = Bind(tape, bank);
  const Tensor out = BiasLogits(h, 0, tape.Constant(z)).value();
  EXPECT_LE(MaxAbsDiff(out, LinearLogits(z, bank.delta[0])), 1e-14);
}

TEST(BiasLogitsTest, CompositionIdentityIsBitwise) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    BiasHeadBank bank = RandomBank(rng, 1 + trial % 6, 1 + trial % 3, 2);
    for (auto& a : bank.alpha) a = Tensor::Filled(a.shape(), 1.0);
    for (auto& d : bank.delta) d = Tensor::ZerosLike(d);
    const Tensor z = RandomTensor(rng, {3, bank.embedding_dim()}, 3.0);
    ad::Tape tape;
    BoundHeads h = Bind(tape, bank);
    ad::Var zv = tape.Constant(z);
    EXPECT_EQ(BiasLogits(h, 1, zv).value(), VwLogits(h, zv).value());
  }
}

TEST(BiasLogitsTest, DomainOutOfRangeRejected) {
  BiasHeadBank bank = BiasHeadBank::Init(3, 2, 2, 5);
  ad::Tape tape;
  BoundHeads h = Bind(tape, bank);
  EXPECT_THROW(BiasLogits(h, 2, tape.Constant(Tensor::Zeros({1, 3}))),
               std::out_of_range);
  EXPECT_THROW(bank.Composed(2), std::out_of_range);
}

TEST(BiasLogitsTest, MatchesComposedHead) {
  std::mt19937_64 rng(5);
  BiasHeadBank bank = RandomBank(rng, 4, 3, 3);
  const Tensor z = RandomTensor(rng, {6, 4});
  for (bool scale_intercept : {true, false}) {
    bank.scale_intercept = scale_intercept;
    ad::Tape tape;
    BoundHeads h = Bind(tape, bank);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_LE(MaxAbsDiff(BiasLogits(h, i, tape.Constant(z)).value(),
                           LinearLogits(z, bank.Composed(i))),
                1e-12);
    }
  }
}

TEST(BiasLogitsTest, PinnedInterceptGetsNoScaleGradient) {
  std::mt19937_64 rng(6);
  BiasHeadBank bank = RandomBank(rng, 3, 2, 2);
  bank.scale_intercept = false;
  ad::Tape tape;
  BoundHeads h = Bind(tape, bank);
  ad::Var out = ad::Sum(BiasLogits(h, 1, tape.Constant(RandomTensor(rng, {4, 3}))));
  const Tensor g = tape.Gradient(out, h.alpha[1]);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(g.at(3, c), 0.0);
  EXPECT_NE(g.at(0, 0), 0.0);
}

TEST(BiasLogitsTest, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  BiasHeadBank bank = RandomBank(rng, 3, 2, 2);
  const Tensor z = RandomTensor(rng, {4, 3});
  const Tensor y = Tensor::Matrix({{1, 0}, {0, 1}, {0, 1}, {1, 0}});
  auto ce = [&](const Tensor& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      s += RowSoftmaxCrossEntropy(testing::RowLinear(z.row(i), w), y.row(i));
    }
    return s;
  };
  ad::Tape tape;
  BoundHeads h = Bind(tape, bank);
  ad::Var logp = ad::Log(ad::Softmax(BiasLogits(h, 1, tape.Constant(z))));
  ad::Var loss = ad::Scale(ad::Sum(ad::Multiply(tape.Constant(y), logp)), -1.0);
  const std::vector<ad::Var> wrt = {h.w_vw, h.alpha[1], h.delta[1]};
  const auto grads = tape.Gradients(loss, wrt);
  const Tensor g_vw = NumericGradient(
      [&](const Tensor& w) {
        BiasHeadBank b = bank;
        b.w_vw = w;
        return ce(b.Composed(1));
      },
      bank.w_vw);
  const Tensor g_alpha = NumericGradient(
      [&](const Tensor& a) {
        BiasHeadBank b = bank;
        b.alpha[1] = a;
        return ce(b.Composed(1));
      },
      bank.alpha[1]);
  const Tensor g_delta = NumericGradient(
      [&](const Tensor& d) {
        BiasHeadBank b = bank;
        b.delta[1] = d;
        return ce(b.Composed(1));
      },
      bank.delta[1]);
  EXPECT_LT(RelativeError(grads[0], g_vw), 1e-6);
  EXPECT_LT(RelativeError(grads[1], g_alpha), 1e-6);
  EXPECT_LT(RelativeError(grads[2], g_delta), 1e-6);
}

TEST(RegularizerTest, GradientsAreTwiceTheDeviation) {
  std::mt19937_64 rng(8);
  BiasHeadBank bank = RandomBank(rng, 5, 3, 2);
  ad::Tape tape;
  BoundHeads h = Bind(tape, bank);
  ad::Var one = tape.Constant(Tensor::Scalar(1.0));
  const Tensor g_vw = tape.Gradient(ad::SquaredNorm(h.w_vw), h.w_vw);
  const Tensor g_d = tape.Gradient(ad::SquaredNorm(h.delta[0]), h.delta[0]);
  const Tensor g_a =
      tape.Gradient(ad::SquaredNorm(ad::Subtract(h.alpha[1], one)), h.alpha[1]);
  for (std::size_t k = 0; k < g_vw.size(); ++k) {
    EXPECT_NEAR(g_vw[k], 2.0 * bank.w_vw[k], 1e-12);
    EXPECT_NEAR(g_d[k], 2.0 * bank.delta[0][k], 1e-12);
    EXPECT_NEAR(g_a[k], 2.0 * (bank.alpha[1][k] - 1.0), 1e-12);
  }
}

TEST(BankInitTest, ScalesStartAtOneAndOffsetsSmall) {
  BiasHeadBank bank = BiasHeadBank::Init(8, 3, 4, 13);
  ASSERT_EQ(bank.n_domains(), 4u);
  EXPECT_EQ(bank.w_vw.shape(), (Shape{9, 3}));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(bank.alpha[i], Tensor::Filled({9, 3}, 1.0));
    for (double v : bank.delta[i].data()) EXPECT_LE(std::abs(v), 1e-2);
  }
  BiasHeadBank again = BiasHeadBank::Init(8, 3, 4, 13);
  EXPECT_EQ(again.w_vw, bank.w_vw);
  EXPECT_EQ(again.delta[3], bank.delta[3]);
}

TEST(DomainLogitsTest, ZeroWeightsGiveUniformPosterior) {
  std::mt19937_64 rng(9);
  DomainClassifier dc{Tensor::Zeros({5, 3})};
  ad::Tape tape;
  ad::Var phi = tape.Leaf(dc.phi);
  ad::Var z = tape.Constant(RandomTensor(rng, {4, 4}));
  const Tensor p = ad::Softmax(DomainLogits(phi, z)).value();
  for (double v : p.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(DomainLogitsTest, LossNeverReachesFeatureExtractor) {
  std::mt19937_64 rng(10);
  const std::vector<std::size_t> dims = {4, 6, 3};
  net::LayeredNet net = net::LayeredNet::Init(dims, 1);
  DomainClassifier dc = DomainClassifier::Init(3, 2, 2);
  const Tensor d = Tensor::Matrix({{1, 0}, {0, 1}, {1, 0}});
  const Tensor x = RandomTensor(rng, {3, 4});
  for (int step = 0; step < 5; ++step) {
    ad::Tape tape;
    net::BoundNet b = net::Bind(tape, net);
    ad::Var z = net::ForwardWithTaps(b, tape.Constant(x)).z;
    ad::Var phi = tape.Leaf(dc.phi);
    ad::Var logp = ad::Log(ad::Softmax(DomainLogits(phi, tape.Detach(z))));
    ad::Var loss = ad::Scale(ad::Sum(ad::Multiply(tape.Constant(d), logp)), -1);
    tape.Backward(loss);
    for (const ad::Var& p : b.Params()) {
      EXPECT_EQ(tape.Adjoint(p), Tensor::ZerosLike(p.value()));
    }
    const Tensor g = tape.Adjoint(phi);
    for (std::size_t k = 0; k < g.size(); ++k) dc.phi[k] -= 0.5 * g[k];
  }
}

TEST(DomainLogitsTest, EmbeddingGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  DomainClassifier dc = DomainClassifier::Init(4, 3, 7);
  const Tensor z = RandomTensor(rng, {5, 4});
  const Tensor d = Tensor::Matrix(
      {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 0}, {0, 1, 0}});
  ad::Tape tape;
  ad::Var phi = tape.Leaf(dc.phi);
  ad::Var zv = tape.Leaf(z);
  ad::Var logp = ad::Log(ad::Softmax(DomainLogits(phi, zv)));
  ad::Var loss = ad::Scale(ad::Sum(ad::Multiply(tape.Constant(d), logp)), -1);
  const ad::ActivationGradient g = tape.GradWrtActivation(loss, zv);
  ASSERT_TRUE(g.reachable);
  auto f = [&](const Tensor& zz) {
    double s = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      s += RowSoftmaxCrossEntropy(testing::RowLinear(zz.row(i), dc.phi),
                                  d.row(i));
    }
    return s;
  };
  EXPECT_LT(RelativeError(g.grad, NumericGradient(f, z)), 1e-4);
}

TEST(DomainLogitsTest, DimensionMismatchRejected) {
  ad::Tape tape;
  ad::Var phi = tape.Leaf(Tensor::Zeros({5, 2}));
  EXPECT_THROW(DomainLogits(phi, tape.Constant(Tensor::Zeros({1, 3}))),
               std::invalid_argument);
}

}  // namespace
}  // namespace debias::heads
