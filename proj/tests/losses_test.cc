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
#include <numbers>
#include <random>

#include "gtest/gtest.h"
#include "oracles.h"

namespace debias::loss {
namespace {

using ::debias::heads::BiasHeadBank;
using ::debias::heads::BoundHeads;
using ::debias::testing::RandomTensor;
using ::debias::testing::RowBinaryCrossEntropy;
using ::debias::testing::RowLinear;
using ::debias::testing::RowSoftmaxCrossEntropy;
using ::debias::testing::SquaredNormOf;

const double kLn2 = std::numbers::ln2;

Tensor OneHot(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  Tensor y(Shape{n, k});
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  for (std::size_t i = 0; i < n; ++i) y.at(i, pick(rng)) = 1.0;
  return y;
}

Tensor PlusMinus(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  Tensor y(Shape{n, k});
  std::bernoulli_distribution coin(0.5);
  for (double& v : y.data()) v = coin(rng) ? 1.0 : -1.0;
  return y;
}

BiasHeadBank RandomBank(std::mt19937_64& rng, std::size_t e, std::size_t l,
                        std::size_t n) {
  BiasHeadBank bank;
  bank.w_vw = RandomTensor(rng, {e + 1, l});
  for (std::size_t i = 0; i < n; ++i) {
    bank.alpha.push_back(RandomTensor(rng, {e + 1, l}, 0.3));
    for (double& v : bank.alpha.back().data()) v += 1.0;
    bank.delta.push_back(RandomTensor(rng, {e + 1, l}, 0.3));
  }
  return bank;
}

TEST(TaskLossTest, UniformBinarySoftmaxIsLn2) {
  ad::Tape tape;
  ad::Var logits = tape.Leaf(Tensor::Zeros({3, 2}));
  const Tensor y = Tensor::Matrix({{1, 0}, {0, 1}, {1, 0}});
  EXPECT_NEAR(TaskLoss(logits, y, TaskMode::kSoftmaxCe).value().item(), kLn2,
              1e-15);
}

TEST(TaskLossTest, BceSumsOverLabels) {
  ad::Tape tape;
  ad::Var logits = tape.Leaf(Tensor::Zeros({2, 5}));
  const Tensor y = Tensor::Matrix({{1, 0, 1, 0, 0}, {0, 0, 0, 1, 1}});
  EXPECT_NEAR(TaskLoss(logits, y, TaskMode::kMultilabelBce).value().item(),
              5.0 * kLn2, 1e-14);
}

TEST(TaskLossTest, MatchesScalarRecomputation) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + trial % 7, k = 2 + trial % 4;
    const Tensor l = RandomTensor(rng, {n, k}, 2.0);
    const Tensor y = OneHot(rng, n, k);
    Tensor yb = Tensor::ZerosLike(l);
    std::bernoulli_distribution coin(0.4);
    for (double& v : yb.data()) v = coin(rng) ? 1.0 : 0.0;
    double ce = 0.0, bce = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ce += RowSoftmaxCrossEntropy(l.row(i), y.row(i));
      bce += RowBinaryCrossEntropy(l.row(i), yb.row(i));
    }
    ad::Tape tape;
    ad::Var lv = tape.Leaf(l);
    EXPECT_NEAR(TaskLoss(lv, y, TaskMode::kSoftmaxCe).value().item(),
                ce / static_cast<double>(n), 1e-12);
    EXPECT_NEAR(TaskLoss(lv, yb, TaskMode::kMultilabelBce).value().item(),
                bce / static_cast<double>(n), 1e-12);
  }
}

TEST(TaskLossTest, RejectsLabelsOutsideDomain) {
  ad::Tape tape;
  ad::Var logits = tape.Leaf(Tensor::Zeros({1, 2}));
  EXPECT_THROW(TaskLoss(logits, Tensor::Matrix({{1, 1}}), TaskMode::kSoftmaxCe),
               std::invalid_argument);
  EXPECT_THROW(
      TaskLoss(logits, Tensor::Matrix({{2, 0}}), TaskMode::kMultilabelBce),
      std::invalid_argument);
  EXPECT_THROW(
      TaskLoss(logits, Tensor::Matrix({{-1, 0}}), TaskMode::kMultilabelBce),
      std::invalid_argument);
  EXPECT_THROW(TaskLoss(logits, Tensor::Matrix({{1, 0, 0}}),
                        TaskMode::kSoftmaxCe),
               std::invalid_argument);
  EXPECT_NO_THROW(
      TaskLoss(logits, Tensor::Matrix({{0.3, 0.7}}), TaskMode::kSoftmaxCe));
}

TEST(TaskLossTest, NonnegativeAndFinite) {
  std::mt19937_64 rng(2);
  ad::Tape tape;
  ad::Var l = tape.Leaf(RandomTensor(rng, {8, 3}, 50.0));
  const double v = TaskLoss(l, OneHot(rng, 8, 3), TaskMode::kSoftmaxCe).value().item();
  EXPECT_GE(v, 0.0);
  EXPECT_TRUE(std::isfinite(v));
}

TEST(CombineDomainsTest, WeightingSchemes) {
  ad::Tape tape;
  std::vector<ad::Var> means = {tape.Constant(Tensor::Scalar(2.0)),
                                tape.Constant(Tensor::Scalar(7.0)),
                                tape.Constant(Tensor::Scalar(4.0))};
  const std::vector<std::size_t> counts = {1, 0, 3};
  EXPECT_DOUBLE_EQ(
      CombineDomains(means, counts, DomainWeighting::kEqual).value().item(),
      3.0);
  EXPECT_DOUBLE_EQ(CombineDomains(means, counts, DomainWeighting::kProportional)
                       .value()
                       .item(),
                   3.5);
  EXPECT_DOUBLE_EQ(
      CombineDomains(means, counts, DomainWeighting::kSum).value().item(),
      14.0);
  const std::vector<std::size_t> none = {0, 0, 0};
  EXPECT_THROW(CombineDomains(means, none, DomainWeighting::kEqual),
               std::invalid_argument);
}

TEST(CombineDomainsTest, ParseRoundTrip) {
  for (auto w : {DomainWeighting::kEqual, DomainWeighting::kProportional,
                 DomainWeighting::kSum}) {
    EXPECT_EQ(ParseDomainWeighting(ToString(w)), w);
  }
  for (auto m : {TaskMode::kSoftmaxCe, TaskMode::kMultilabelBce}) {
    EXPECT_EQ(ParseTaskMode(ToString(m)), m);
  }
  EXPECT_THROW(ParseDomainWeighting("bogus"), std::invalid_argument);
}

TEST(LossWeightsTest, NegativeRejected) {
  LossWeights w;
  EXPECT_NO_THROW(w.Validate());
  w.gamma = -0.1;
  EXPECT_THROW(w.Validate(), std::invalid_argument);
}

// Term-by-term recomputation of the hinge objective with raw sums.
double SvmOracle(const BiasHeadBank& bank, const std::vector<Tensor>& z,
                 const std::vector<Tensor>& y, const LossWeights& w) {
  double obj = 0.5 * SquaredNormOf(bank.w_vw);
  for (const Tensor& d : bank.delta) obj += 0.5 * w.lambda * SquaredNormOf(d);
  for (std::size_t i = 0; i < z.size(); ++i) {
    Tensor wi = bank.w_vw;
    for (std::size_t k = 0; k < wi.size(); ++k) wi[k] += bank.delta[i][k];
    for (std::size_t j = 0; j < z[i].rows(); ++j) {
      const auto s_vw = RowLinear(z[i].row(j), bank.w_vw);
      const auto s_b = RowLinear(z[i].row(j), wi);
      for (std::size_t c = 0; c < s_vw.size(); ++c) {
        obj += w.c1 * std::max(0.0, 1.0 - y[i].at(j, c) * s_vw[c]);
        obj += w.c2 * std::max(0.0, 1.0 - y[i].at(j, c) * s_b[c]);
      }
    }
  }
  return obj;
}

struct Bound {
  ad::Tape tape;
  BoundHeads heads;
  std::vector<ad::Var> z;
};

void BindAll(Bound& b, const BiasHeadBank& bank, const std::vector<Tensor>& z) {
  b.heads = heads::Bind(b.tape, bank);
  for (const Tensor& t : z) b.z.push_back(b.tape.Leaf(t));
}

TEST(SvmObjectiveTest, ZeroWeightsCostOnePerSamplePerTerm) {
  BiasHeadBank bank;
  bank.w_vw = Tensor::Zeros({3, 1});
  bank.alpha = {Tensor::Filled({3, 1}, 1.0), Tensor::Filled({3, 1}, 1.0)};
  bank.delta = {Tensor::Zeros({3, 1}), Tensor::Zeros({3, 1})};
  std::mt19937_64 rng(3);
  const std::vector<Tensor> z = {RandomTensor(rng, {3, 2}),
                                 RandomTensor(rng, {4, 2})};
  const std::vector<Tensor> y = {PlusMinus(rng, 3, 1), PlusMinus(rng, 4, 1)};
  LossWeights w{.c1 = 0.7, .c2 = 1.9, .c3 = 0, .lambda = 0.5, .gamma = 0};
  Bound b;
  BindAll(b, bank, z);
  const ObjectiveTerms t =
      SvmObjective(b.heads, b.z, y, w, DomainWeighting::kSum);
  EXPECT_NEAR(t.total.value().item(), (0.7 + 1.9) * 7.0, 1e-12);
}

TEST(SvmObjectiveTest, SatisfiedMarginCostsNothing) {
  BiasHeadBank bank;
  bank.w_vw = Tensor::Matrix({{2}, {0}});
  bank.alpha = {Tensor::Filled({2, 1}, 1.0)};
  bank.delta = {Tensor::Zeros({2, 1})};
  Bound b;
  BindAll(b, bank, {Tensor::Matrix({{1}})});
  LossWeights w{.c1 = 1, .c2 = 0, .c3 = 0, .lambda = 0, .gamma = 0};
  const std::vector<Tensor> y = {Tensor::Matrix({{1}})};
  const ObjectiveTerms t =
      SvmObjective(b.heads, b.z, y, w, DomainWeighting::kSum);
  EXPECT_EQ(t.label_vw.value().item(), 0.0);
}

TEST(SvmObjectiveTest, MatchesTermByTermOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    BiasHeadBank bank = RandomBank(rng, 3, 2, 2);
    // Alpha is ignored by the hinge objective; make it visibly not 1.
    const std::vector<Tensor> z = {RandomTensor(rng, {2, 3}),
                                   RandomTensor(rng, {2, 3})};
    const std::vector<Tensor> y = {PlusMinus(rng, 2, 2), PlusMinus(rng, 2, 2)};
    LossWeights w{.c1 = 1.3, .c2 = 0.4, .c3 = 0, .lambda = 0.8, .gamma = 5};
    Bound b;
    BindAll(b, bank, z);
    const ObjectiveTerms t =
        SvmObjective(b.heads, b.z, y, w, DomainWeighting::kSum);
    EXPECT_NEAR(t.total.value().item(), SvmOracle(bank, z, y, w), 1e-10);
  }
}

TEST(SvmObjectiveTest, RejectsNonSignLabels) {
  BiasHeadBank bank = BiasHeadBank::Init(2, 1, 1, 1);
  Bound b;
  BindAll(b, bank, {Tensor::Zeros({1, 2})});
  const std::vector<Tensor> y = {Tensor::Matrix({{0}})};
  EXPECT_THROW(SvmObjective(b.heads, b.z, y, LossWeights{},
                            DomainWeighting::kSum),
               std::invalid_argument);
  EXPECT_THROW(ToPlusMinus(Tensor::Matrix({{0.5}})), std::invalid_argument);
  EXPECT_EQ(ToPlusMinus(Tensor::Matrix({{1, 0}})), Tensor::Matrix({{1, -1}}));
}

// At margin exactly 1 the hinge term contributes a zero subgradient, so the
// only gradient on w_vw is the norm penalty.
TEST(SvmObjectiveTest, SubgradientIsZeroAtKink) {
  BiasHeadBank bank;
  bank.w_vw = Tensor::Matrix({{1}, {0}});
  bank.alpha = {Tensor::Filled({2, 1}, 1.0)};
  bank.delta = {Tensor::Zeros({2, 1})};
  Bound b;
  BindAll(b, bank, {Tensor::Matrix({{1}})});
  LossWeights w{.c1 = 1, .c2 = 0, .c3 = 0, .lambda = 0, .gamma = 0};
  const std::vector<Tensor> y = {Tensor::Matrix({{1}})};
  const ObjectiveTerms t =
      SvmObjective(b.heads, b.z, y, w, DomainWeighting::kSum);
  const Tensor g = b.tape.Gradient(t.total, b.heads.w_vw);
  EXPECT_EQ(g, bank.w_vw);
  EXPECT_EQ(b.tape.Gradient(t.total, b.z[0]), Tensor::Zeros({1, 1}));
}

double BiasRegOracle(const BiasHeadBank& bank, const std::vector<Tensor>& z,
                     const std::vector<Tensor>& y, const LossWeights& w,
                     TaskMode mode) {
  double obj = SquaredNormOf(bank.w_vw);
  for (std::size_t i = 0; i < bank.n_domains(); ++i) {
    obj += w.lambda * SquaredNormOf(bank.delta[i]) +
           w.gamma * SquaredNormOf(bank.alpha[i], 1.0);
  }
  auto row_loss = [&](std::span<const double> l, std::span<const double> t) {
    return mode == TaskMode::kSoftmaxCe ? RowSoftmaxCrossEntropy(l, t)
                                        : RowBinaryCrossEntropy(l, t);
  };
  double label = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    Tensor wi = bank.w_vw;
    for (std::size_t k = 0; k < wi.size(); ++k) {
      wi[k] = bank.alpha[i][k] * bank.w_vw[k] + bank.delta[i][k];
    }
    double s = 0.0;
    for (std::size_t j = 0; j < z[i].rows(); ++j) {
      s += w.c1 * row_loss(RowLinear(z[i].row(j), bank.w_vw), y[i].row(j));
      s += w.c2 * row_loss(RowLinear(z[i].row(j), wi), y[i].row(j));
    }
    label += s / static_cast<double>(z[i].rows());
  }
  return obj + label / static_cast<double>(z.size());
}

TEST(BiasRegObjectiveTest, MatchesTermByTermOracle) {
  std::mt19937_64 rng(5);
  for (TaskMode mode : {TaskMode::kSoftmaxCe, TaskMode::kMultilabelBce}) {
    for (int trial = 0; trial < 10; ++trial) {
      BiasHeadBank bank = RandomBank(rng, 4, 3, 2);
      const std::vector<Tensor> z = {RandomTensor(rng, {3, 4}),
                                     RandomTensor(rng, {5, 4})};
      std::vector<Tensor> y;
      for (const Tensor& zi : z) {
        if (mode == TaskMode::kSoftmaxCe) {
          y.push_back(OneHot(rng, zi.rows(), 3));
        } else {
          Tensor t(Shape{zi.rows(), 3});
          std::bernoulli_distribution coin(0.5);
          for (double& v : t.data()) v = coin(rng) ? 1.0 : 0.0;
          y.push_back(t);
        }
      }
      LossWeights w{.c1 = 0.9, .c2 = 1.7, .c3 = 1, .lambda = 0.3, .gamma = 0.6};
      Bound b;
      BindAll(b, bank, z);
      const ObjectiveTerms t = BiasRegObjective(b.heads, b.z, y, w, mode,
                                                DomainWeighting::kEqual);
      EXPECT_NEAR(t.total.value().item(), BiasRegOracle(bank, z, y, w, mode),
                  1e-10);
    }
  }
}

TEST(BiasRegObjectiveTest, ReducesToRegularizedTaskLoss) {
  std::mt19937_64 rng(6);
  BiasHeadBank bank = RandomBank(rng, 3, 2, 2);
  for (auto& a : bank.alpha) a = Tensor::Filled(a.shape(), 1.0);
  for (auto& d : bank.delta) d = Tensor::ZerosLike(d);
  const Tensor z = RandomTensor(rng, {6, 3});
  const Tensor y = OneHot(rng, 6, 2);
  LossWeights w{.c1 = 2.5, .c2 = 0, .c3 = 0, .lambda = 0, .gamma = 0};
  Bound b;
  BindAll(b, bank, {z});
  b.heads.alpha.resize(1);
  b.heads.delta.resize(1);
  const std::vector<Tensor> ys = {y};
  const ObjectiveTerms t = BiasRegObjective(b.heads, b.z, ys, w,
                                            TaskMode::kSoftmaxCe,
                                            DomainWeighting::kEqual);
  double ce = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    ce += RowSoftmaxCrossEntropy(RowLinear(z.row(i), bank.w_vw), y.row(i));
  }
  EXPECT_NEAR(t.total.value().item(),
              SquaredNormOf(bank.w_vw) + 2.5 * ce / 6.0, 1e-12);
}

TEST(BiasRegObjectiveTest, ZeroParametersGiveUniformLoss) {
  BiasHeadBank bank;
  bank.w_vw = Tensor::Zeros({4, 2});
  bank.alpha = {Tensor::Zeros({4, 2}), Tensor::Zeros({4, 2})};
  bank.delta = {Tensor::Zeros({4, 2}), Tensor::Zeros({4, 2})};
  std::mt19937_64 rng(7);
  const std::vector<Tensor> z = {RandomTensor(rng, {3, 3}),
                                 RandomTensor(rng, {2, 3})};
  const std::vector<Tensor> y = {OneHot(rng, 3, 2), OneHot(rng, 2, 2)};
  LossWeights w{.c1 = 1.5, .c2 = 0.5, .c3 = 0, .lambda = 3, .gamma = 0};
  Bound b;
  BindAll(b, bank, z);
  const ObjectiveTerms t = BiasRegObjective(
      b.heads, b.z, y, w, TaskMode::kSoftmaxCe, DomainWeighting::kEqual);
  EXPECT_EQ(t.reg_vw.value().item(), 0.0);
  EXPECT_EQ(t.reg_delta.value().item(), 0.0);
  EXPECT_EQ(t.reg_alpha.value().item(), 0.0);
  EXPECT_NEAR(t.total.value().item(), 2.0 * kLn2, 1e-14);
}

TEST(BiasRegObjectiveTest, OffsetGradientCarriesPenaltyTerm) {
  std::mt19937_64 rng(8);
  BiasHeadBank bank = RandomBank(rng, 3, 2, 2);
  const std::vector<Tensor> z = {RandomTensor(rng, {4, 3}),
                                 RandomTensor(rng, {4, 3})};
  const std::vector<Tensor> y = {OneHot(rng, 4, 2), OneHot(rng, 4, 2)};
  auto grad_delta = [&](double lambda) {
    LossWeights w{.c1 = 1, .c2 = 1, .c3 = 0, .lambda = lambda, .gamma = 0.2};
    Bound b;
    BindAll(b, bank, z);
    const ObjectiveTerms t = BiasRegObjective(
        b.heads, b.z, y, w, TaskMode::kSoftmaxCe, DomainWeighting::kEqual);
    return b.tape.Gradient(t.total, b.heads.delta[1]);
  };
  const Tensor g0 = grad_delta(0.0);
  const Tensor g1 = grad_delta(0.75);
  for (std::size_t k = 0; k < g0.size(); ++k) {
    EXPECT_NEAR(g1[k] - g0[k], 2.0 * 0.75 * bank.delta[1][k], 1e-12);
  }
}

TEST(BiasRegObjectiveTest, TermsSumToTotal) {
  std::mt19937_64 rng(9);
  BiasHeadBank bank = RandomBank(rng, 5, 3, 3);
  const std::vector<Tensor> z = {RandomTensor(rng, {2, 5}),
                                 RandomTensor(rng, {3, 5}),
                                 RandomTensor(rng, {4, 5})};
  const std::vector<Tensor> y = {OneHot(rng, 2, 3), OneHot(rng, 3, 3),
                                 OneHot(rng, 4, 3)};
  for (auto weighting : {DomainWeighting::kEqual, DomainWeighting::kProportional,
                         DomainWeighting::kSum}) {
    Bound b;
    BindAll(b, bank, z);
    const ObjectiveTerms t = BiasRegObjective(
        b.heads, b.z, y, LossWeights{}, TaskMode::kSoftmaxCe, weighting);
    const double parts = t.label_vw.value().item() +
                         t.label_bias.value().item() + t.reg_vw.value().item() +
                         t.reg_delta.value().item() + t.reg_alpha.value().item();
    EXPECT_NEAR(t.total.value().item(), parts, 1e-12);
  }
}

TEST(BiasRegObjectiveTest, EmptyDomainSkipsLabelTerms) {
  std::mt19937_64 rng(10);
  BiasHeadBank bank = RandomBank(rng, 2, 2, 2);
  const std::vector<Tensor> z = {RandomTensor(rng, {3, 2}), Tensor::Zeros({0, 2})};
  const std::vector<Tensor> y = {OneHot(rng, 3, 2), Tensor::Zeros({0, 2})};
  Bound b;
  BindAll(b, bank, z);
  const ObjectiveTerms t = BiasRegObjective(
      b.heads, b.z, y, LossWeights{}, TaskMode::kSoftmaxCe,
      DomainWeighting::kEqual);
  const Tensor g = b.tape.Gradient(t.total, b.heads.delta[1]);
  for (std::size_t k = 0; k < g.size(); ++k) {
    EXPECT_NEAR(g[k], 2.0 * 0.1 * bank.delta[1][k], 1e-15);
  }
}

}  // namespace
}  // namespace debias::loss
