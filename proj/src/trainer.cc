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

#include "debias/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "debias/metrics.h"

namespace debias::train {
namespace {

// Seed streams. Batches, tap choice, mixup and each parameter group draw from
// separate generators so strategies stay comparable under one seed.
enum Stream : std::uint64_t {
  kBatchStream = 1,
  kTapStream = 2,
  kMixStream = 3,
  kNetStream = 10,
  kHeadStream = 11,
  kDomainStream = 12,
};

bool IsFinite(double v) { return std::isfinite(v); }

Tensor OneHot(std::span<const std::size_t> labels, std::size_t k) {
  Tensor t(Shape{labels.size(), k});
  for (std::size_t i = 0; i < labels.size(); ++i) t.at(i, labels[i]) = 1.0;
  return t;
}

void Sgd(Tensor& p, const Tensor& g, double eta) {
  for (std::size_t k = 0; k < p.size(); ++k) p[k] -= eta * g[k];
}

double MaxAbs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

double Rms(const Tensor& t) {
  if (t.size() == 0) return 0.0;
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s / static_cast<double>(t.size()));
}

// One forward pass of the feature extractor with every parameter bound as a
// leaf, plus the per-domain views of the batch.
struct Pass {
  ad::Tape tape;
  net::BoundNet net;
  heads::BoundHeads heads;
  ad::Var phi;
  ad::Var z;
  ad::Var z_detached;
  net::TapActivations taps;
  std::vector<std::vector<std::size_t>> rows;
  std::vector<ad::Var> z_dom;
  std::vector<Tensor> y_dom;
  Tensor domain_targets;
  std::size_t skipped = 0;
};

void Begin(Pass& p, const TrainState& state, const DomainBatch& batch) {
  const std::size_t n_domains = state.heads.n_domains();
  if (batch.x.rows() != batch.y.rows() ||
      batch.x.rows() != batch.domain.size()) {
    throw std::invalid_argument("batch: X, Y and D row counts differ");
  }
  if (batch.x.rows() == 0) throw std::invalid_argument("batch: empty");
  p.net = net::Bind(p.tape, state.net);
  p.heads = heads::Bind(p.tape, state.heads);
  p.phi = p.tape.Leaf(state.domain.phi);
  // The input is a leaf so that the input tap can be perturbed.
  net::ForwardResult fwd =
      net::ForwardWithTaps(p.net, p.tape.Leaf(batch.x));
  p.z = fwd.z;
  p.taps = std::move(fwd.taps);
  p.z_detached = p.tape.Detach(p.z);
  p.rows = RowsByDomain(batch, n_domains);
  const std::size_t e = state.net.output_dim();
  for (const auto& r : p.rows) {
    if (r.empty()) {
      ++p.skipped;
      p.z_dom.push_back(p.tape.Constant(Tensor::Zeros({0, e})));
      p.y_dom.push_back(Tensor::Zeros({0, batch.y.cols()}));
    } else {
      p.z_dom.push_back(ad::RowSelect(p.z, r));
      p.y_dom.push_back(SelectRows(batch.y, r));
    }
  }
  p.domain_targets = OneHot(batch.domain, state.domain.n_domains());
}

ad::Var DomainLoss(Pass& p, const ad::Var& z_detached) {
  return loss::TaskLoss(heads::DomainLogits(p.phi, z_detached),
                        p.domain_targets, loss::TaskMode::kSoftmaxCe);
}

// C1-free visual-world label loss with the configured domain weighting.
ad::Var VwLabelLoss(Pass& p, const TrainConfig& config) {
  std::vector<ad::Var> means;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < p.z_dom.size(); ++i) {
    counts.push_back(p.rows[i].size());
    if (p.rows[i].empty()) {
      means.emplace_back();
      continue;
    }
    means.push_back(loss::TaskLoss(heads::VwLogits(p.heads, p.z_dom[i]),
                                   p.y_dom[i], config.task_mode));
  }
  return loss::CombineDomains(means, counts, config.weighting);
}

void ApplyNet(net::LayeredNet& net, std::span<const Tensor> grads,
              double eta, double weight_decay) {
  auto& layers = net.mutable_layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (weight_decay > 0.0) {
      for (double& w : layers[k].weight.storage()) w *= 1.0 - eta * weight_decay;
    }
    Sgd(layers[k].weight, grads[2 * k], eta);
    Sgd(layers[k].bias, grads[2 * k + 1], eta);
  }
}

struct Targets {
  std::vector<ad::Var> wrt;
  std::size_t n_net = 0;
  bool alpha = false;
  bool delta = false;
};

Targets CollectTargets(const Pass& p, bool alpha, bool delta) {
  Targets t;
  t.wrt = p.net.Params();
  t.n_net = t.wrt.size();
  t.wrt.push_back(p.heads.w_vw);
  t.alpha = alpha;
  t.delta = delta;
  if (alpha) t.wrt.insert(t.wrt.end(), p.heads.alpha.begin(), p.heads.alpha.end());
  if (delta) t.wrt.insert(t.wrt.end(), p.heads.delta.begin(), p.heads.delta.end());
  return t;
}

void ApplyAll(TrainState& state, const Targets& t,
              const std::vector<Tensor>& g, const TrainConfig& config) {
  ApplyNet(state.net, std::span<const Tensor>(g.data(), t.n_net), config.eta,
           config.weight_decay);
  std::size_t k = t.n_net;
  Sgd(state.heads.w_vw, g[k++], config.eta);
  const std::size_t n = state.heads.n_domains();
  if (t.alpha) {
    for (std::size_t i = 0; i < n; ++i, ++k) {
      if (!config.freeze_bias_heads) Sgd(state.heads.alpha[i], g[k], config.eta);
    }
  }
  if (t.delta) {
    for (std::size_t i = 0; i < n; ++i, ++k) {
      if (!config.freeze_bias_heads) Sgd(state.heads.delta[i], g[k], config.eta);
    }
  }
}

void FinishDomain(Pass& p, TrainState& state, const ad::Var& l_domain,
                  const TrainConfig& config, StepMetrics& m) {
  m.l_domain = l_domain.value().item();
  if (config.check_stop_gradient) {
    const std::vector<ad::Var> theta = p.net.Params();
    for (const Tensor& g : p.tape.Gradients(l_domain, theta)) {
      m.domain_grad_theta = std::max(m.domain_grad_theta, MaxAbs(g));
    }
  }
  Sgd(state.domain.phi, p.tape.Gradient(l_domain, p.phi), config.eta);
}

void FillTerms(const loss::ObjectiveTerms& t, StepMetrics& m) {
  m.l_vw = t.label_vw.value().item();
  m.l_bias = t.label_bias.value().item();
  m.r_wvw = t.reg_vw.value().item();
  m.r_delta = t.reg_delta.value().item();
  m.r_alpha = t.reg_alpha.value().item();
}

std::vector<std::string> ResolveTaps(const TrainConfig& config,
                                     const net::LayeredNet& net) {
  net::TapSet taps{config.taps};
  if (taps.names.empty()) taps = net::DefaultTapSet(net);
  net::ValidateTapSet(net, taps);
  return taps.names;
}

StepMetrics CrossGradientStep(TrainState& state, const DomainBatch& batch,
                              const TrainConfig& config, StepRngs& rngs,
                              const std::vector<std::string>& taps) {
  Pass p;
  Begin(p, state, batch);
  StepMetrics m;
  m.skipped_domains = p.skipped;
  const loss::ObjectiveTerms terms =
      loss::BiasRegObjective(p.heads, p.z_dom, p.y_dom, config.weights,
                             config.task_mode, config.weighting);
  FillTerms(terms, m);

  // Perturbation directions come from batch sums so the step per sample does
  // not shrink with the batch size.
  const double n = static_cast<double>(batch.x.rows());
  ad::Var label_sum = ad::Scale(
      loss::TaskLoss(heads::VwLogits(p.heads, p.z), batch.y, config.task_mode),
      n);
  ad::Var domain_mean = DomainLoss(p, p.z_detached);
  ad::Var domain_sum = ad::Scale(domain_mean, n);

  std::uniform_int_distribution<std::size_t> pick(0, taps.size() - 1);
  const std::string& tap = taps[pick(rngs.tap)];
  m.tap = tap;
  const ad::Var q = p.taps.at(tap);
  double eps = config.epsilon;
  if (config.per_tap_epsilon_scaling) eps *= Rms(q.value());
  const StopGradientLink link{p.z, p.z_detached};
  const AugmentedPair aug =
      MctPerturb(p.tape, label_sum, domain_sum, q, eps, &link);
  m.tap_rms = Rms(q.value());
  m.shift_rms = Rms(aug.domain_shift);

  ad::Var q_bar = config.augment_through_prefix
                      ? ad::Add(q, p.tape.Constant(aug.domain_shift))
                      : p.tape.Constant(aug.q_bar);
  ad::Var z_bar = net::ForwardFromTap(p.net, tap, q_bar);
  ad::Var l_aug = ad::Scale(
      loss::DomainWeightedTaskLoss(heads::VwLogits(p.heads, z_bar), batch.y,
                                   p.rows, config.task_mode, config.weighting),
      config.weights.c3);
  ad::Var objective = ad::Add(terms.total, l_aug);
  m.l_aug = l_aug.value().item();
  m.total = objective.value().item();

  // The label-perturbed embedding only trains the domain classifier.
  ad::Var z_tilde = p.tape.Detach(
      net::ForwardFromTap(p.net, tap, p.tape.Constant(aug.q_tilde)));
  ad::Var l_domain = ad::Scale(ad::Add(domain_mean, DomainLoss(p, z_tilde)),
                               config.domain_weight);

  const Targets t = CollectTargets(p, true, true);
  const std::vector<Tensor> g = p.tape.Gradients(objective, t.wrt);
  FinishDomain(p, state, l_domain, config, m);
  ApplyAll(state, t, g, config);
  return m;
}

}  // namespace

Strategy ParseStrategy(const std::string& s) {
  for (Strategy st : AllStrategies()) {
    if (ToString(st) == s) return st;
  }
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

std::string ToString(Strategy s) {
  switch (s) {
    case Strategy::kMct: return "mct";
    case Strategy::kErm: return "erm";
    case Strategy::kMixup: return "mixup";
    case Strategy::kCrossgrad: return "crossgrad";
    case Strategy::kDann: return "dann";
    case Strategy::kE2eSvm: return "e2e-svm";
    case Strategy::kE2eCe: return "e2e-ce";
  }
  return "mct";
}

const std::vector<Strategy>& AllStrategies() {
  static const std::vector<Strategy> all = {
      Strategy::kMct,  Strategy::kErm,    Strategy::kMixup, Strategy::kCrossgrad,
      Strategy::kDann, Strategy::kE2eSvm, Strategy::kE2eCe};
  return all;
}

bool UsesBiasHeads(Strategy s) {
  return s == Strategy::kMct || s == Strategy::kCrossgrad ||
         s == Strategy::kE2eCe || s == Strategy::kE2eSvm;
}

void TrainConfig::Validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("train config: " + msg);
  };
  if (!(epsilon >= 0.0) || !IsFinite(epsilon)) fail("epsilon must be >= 0");
  if (!(eta >= 0.0) || !IsFinite(eta)) fail("eta must be >= 0");
  if (batch_size == 0) fail("batch_size must be > 0");
  if (strategy == Strategy::kMixup && batch_size < 2) {
    fail("mixup needs batch_size >= 2");
  }
  if (!(mixup_alpha > 0.0)) fail("mixup_alpha must be > 0");
  if (!(dann_weight >= 0.0)) fail("dann_weight must be >= 0");
  if (!(domain_weight >= 0.0)) fail("domain_weight must be >= 0");
  if (!(vw_l2 >= 0.0)) fail("vw_l2 must be >= 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (embedding_dim == 0) fail("embedding_dim must be > 0");
  for (std::size_t h : hidden) {
    if (h == 0) fail("hidden layer widths must be > 0");
  }
  weights.Validate();
}

std::vector<std::vector<std::size_t>> RowsByDomain(const DomainBatch& batch,
                                                   std::size_t n_domains) {
  std::vector<std::vector<std::size_t>> rows(n_domains);
  for (std::size_t r = 0; r < batch.domain.size(); ++r) {
    const std::size_t d = batch.domain[r];
    if (d >= n_domains) {
      throw std::invalid_argument("batch: domain " + std::to_string(d) +
                                  " out of range (have " +
                                  std::to_string(n_domains) + ")");
    }
    rows[d].push_back(r);
  }
  return rows;
}

DomainBatch SampleBatch(std::span<const DomainData> domains,
                        std::size_t batch_size, Rng& rng) {
  if (domains.empty()) throw std::invalid_argument("sample: no domains");
  const std::size_t n = domains.size();
  const std::size_t dx = domains[0].x.cols(), dy = domains[0].y.cols();
  DomainBatch b;
  b.x = Tensor(Shape{batch_size, dx});
  b.y = Tensor(Shape{batch_size, dy});
  std::size_t r = 0;
  for (std::size_t d = 0; d < n; ++d) {
    const std::size_t count = batch_size / n + (d < batch_size % n ? 1 : 0);
    const DomainData& dom = domains[d];
    if (count > 0 && dom.x.rows() == 0) {
      throw std::invalid_argument("sample: domain " + std::to_string(d) +
                                  " has no rows");
    }
    std::uniform_int_distribution<std::size_t> pick(0, dom.x.rows() - 1);
    for (std::size_t k = 0; k < count; ++k, ++r) {
      const std::size_t src = pick(rng);
      std::copy_n(dom.x.row(src).begin(), dx, b.x.data().begin() + r * dx);
      std::copy_n(dom.y.row(src).begin(), dy, b.y.data().begin() + r * dy);
      b.domain.push_back(d);
    }
  }
  return b;
}

TrainState InitState(const TrainConfig& config, std::size_t input_dim,
                     std::size_t label_dim, std::size_t n_domains) {
  std::vector<std::size_t> dims = {input_dim};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(config.embedding_dim);
  TrainState s;
  s.net = net::LayeredNet::Init(dims, DeriveSeed(config.seed, kNetStream));
  s.heads = heads::BiasHeadBank::Init(config.embedding_dim, label_dim,
                                      n_domains,
                                      DeriveSeed(config.seed, kHeadStream));
  s.heads.scale_intercept = config.scale_intercept;
  s.domain = heads::DomainClassifier::Init(
      config.embedding_dim, n_domains, DeriveSeed(config.seed, kDomainStream));
  return s;
}

ad::ActivationGradient GradAtActivation(const ad::Tape& tape,
                                        const ad::Var& loss, const ad::Var& q,
                                        const StopGradientLink* link) {
  ad::ActivationGradient direct = tape.GradWrtActivation(loss, q);
  if (link == nullptr) return direct;
  const ad::ActivationGradient at_z =
      tape.GradWrtActivation(loss, link->z_detached);
  if (!at_z.reachable) return direct;
  ad::ActivationGradient through = tape.Vjp(link->z, at_z.grad, q);
  if (!through.reachable) return direct;
  if (direct.reachable) {
    for (std::size_t k = 0; k < through.grad.size(); ++k) {
      through.grad[k] += direct.grad[k];
    }
  }
  return through;
}

AugmentedPair MctPerturb(const ad::Tape& tape, const ad::Var& label_loss,
                         const ad::Var& domain_loss, const ad::Var& q,
                         double epsilon, const StopGradientLink* link) {
  const ad::ActivationGradient gd = GradAtActivation(tape, domain_loss, q, link);
  const ad::ActivationGradient gy = GradAtActivation(tape, label_loss, q, link);
  AugmentedPair a;
  a.domain_reachable = gd.reachable;
  a.label_reachable = gy.reachable;
  const Tensor& qv = q.value();
  a.domain_shift = gd.grad;
  a.label_shift = gy.grad;
  a.q_bar = qv;
  a.q_tilde = qv;
  for (std::size_t k = 0; k < qv.size(); ++k) {
    a.domain_shift[k] *= epsilon;
    a.label_shift[k] *= epsilon;
    a.q_bar[k] += a.domain_shift[k];
    a.q_tilde[k] += a.label_shift[k];
  }
  return a;
}

StepRngs MakeStepRngs(std::uint64_t seed) {
  return StepRngs{Rng(DeriveSeed(seed, kTapStream)),
                  Rng(DeriveSeed(seed, kMixStream))};
}

StepMetrics MctStep(TrainState& state, const DomainBatch& batch,
                    const TrainConfig& config, StepRngs& rngs) {
  return CrossGradientStep(state, batch, config, rngs,
                           ResolveTaps(config, state.net));
}

StepMetrics CrossgradStep(TrainState& state, const DomainBatch& batch,
                          const TrainConfig& config, StepRngs& rngs) {
  return CrossGradientStep(state, batch, config, rngs,
                           {std::string(net::kInputTap)});
}

StepMetrics E2eCeStep(TrainState& state, const DomainBatch& batch,
                      const TrainConfig& config) {
  Pass p;
  Begin(p, state, batch);
  StepMetrics m;
  m.skipped_domains = p.skipped;
  const loss::ObjectiveTerms terms =
      loss::BiasRegObjective(p.heads, p.z_dom, p.y_dom, config.weights,
                             config.task_mode, config.weighting);
  FillTerms(terms, m);
  m.total = terms.total.value().item();
  ad::Var l_domain =
      ad::Scale(DomainLoss(p, p.z_detached), config.domain_weight);
  const Targets t = CollectTargets(p, true, true);
  const std::vector<Tensor> g = p.tape.Gradients(terms.total, t.wrt);
  FinishDomain(p, state, l_domain, config, m);
  ApplyAll(state, t, g, config);
  return m;
}

StepMetrics E2eSvmStep(TrainState& state, const DomainBatch& batch,
                       const TrainConfig& config) {
  Pass p;
  Begin(p, state, batch);
  StepMetrics m;
  m.skipped_domains = p.skipped;
  std::vector<Tensor> y_pm;
  for (const Tensor& y : p.y_dom) y_pm.push_back(loss::ToPlusMinus(y));
  const loss::ObjectiveTerms terms = loss::SvmObjective(
      p.heads, p.z_dom, y_pm, config.weights, config.weighting);
  FillTerms(terms, m);
  m.total = terms.total.value().item();
  ad::Var l_domain =
      ad::Scale(DomainLoss(p, p.z_detached), config.domain_weight);
  const Targets t = CollectTargets(p, false, true);
  const std::vector<Tensor> g = p.tape.Gradients(terms.total, t.wrt);
  FinishDomain(p, state, l_domain, config, m);
  ApplyAll(state, t, g, config);
  return m;
}

StepMetrics ErmStep(TrainState& state, const DomainBatch& batch,
                    const TrainConfig& config) {
  Pass p;
  Begin(p, state, batch);
  StepMetrics m;
  ad::Var label = VwLabelLoss(p, config);
  ad::Var reg = ad::Scale(ad::SquaredNorm(p.heads.w_vw), config.vw_l2);
  ad::Var objective = ad::Add(label, reg);
  m.l_vw = label.value().item();
  m.r_wvw = reg.value().item();
  m.total = objective.value().item();
  ad::Var l_domain =
      ad::Scale(DomainLoss(p, p.z_detached), config.domain_weight);
  const Targets t = CollectTargets(p, false, false);
  const std::vector<Tensor> g = p.tape.Gradients(objective, t.wrt);
  FinishDomain(p, state, l_domain, config, m);
  ApplyAll(state, t, g, config);
  return m;
}

void MixRows(std::span<const double> a, std::span<const double> b, double beta,
             std::span<double> out) {
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = beta * a[k] + (1.0 - beta) * b[k];
  }
}

StepMetrics MixupStep(TrainState& state, const DomainBatch& batch,
                      const TrainConfig& config, StepRngs& rngs) {
  const std::size_t n = batch.x.rows();
  if (n < 2) throw std::invalid_argument("mixup: batch needs >= 2 rows");
  Tensor x(batch.x.shape()), y(batch.y.shape());
  std::vector<std::size_t> partners;
  for (std::size_t a = 0; a < n; ++a) {
    partners.clear();
    for (std::size_t b = 0; b < n; ++b) {
      if (batch.domain[b] != batch.domain[a]) partners.push_back(b);
    }
    if (partners.empty()) {
      for (std::size_t b = 0; b < n; ++b) {
        if (b != a) partners.push_back(b);
      }
    }
    std::uniform_int_distribution<std::size_t> pick(0, partners.size() - 1);
    const std::size_t b = partners[pick(rngs.mix)];
    const double beta = SampleBeta(rngs.mix, config.mixup_alpha,
                                   config.mixup_alpha);
    MixRows(batch.x.row(a), batch.x.row(b), beta, x.row(a));
    MixRows(batch.y.row(a), batch.y.row(b), beta, y.row(a));
  }

  Pass p;
  Begin(p, state, batch);
  StepMetrics m;
  ad::Var z_mix = net::ForwardWithTaps(p.net, p.tape.Constant(x)).z;
  ad::Var label = loss::TaskLoss(heads::VwLogits(p.heads, z_mix), y,
                                 config.task_mode);
  ad::Var reg = ad::Scale(ad::SquaredNorm(p.heads.w_vw), config.vw_l2);
  ad::Var objective = ad::Add(label, reg);
  m.l_vw = label.value().item();
  m.r_wvw = reg.value().item();
  m.total = objective.value().item();
  ad::Var l_domain =
      ad::Scale(DomainLoss(p, p.z_detached), config.domain_weight);
  const Targets t = CollectTargets(p, false, false);
  const std::vector<Tensor> g = p.tape.Gradients(objective, t.wrt);
  FinishDomain(p, state, l_domain, config, m);
  ApplyAll(state, t, g, config);
  return m;
}

StepMetrics DannStep(TrainState& state, const DomainBatch& batch,
                     const TrainConfig& config) {
  Pass p;
  Begin(p, state, batch);
  StepMetrics m;
  ad::Var label = VwLabelLoss(p, config);
  ad::Var reg = ad::Scale(ad::SquaredNorm(p.heads.w_vw), config.vw_l2);
  ad::Var l_domain = ad::Scale(
      DomainLoss(p, ad::GradReverse(p.z, config.dann_weight)),
      config.domain_weight);
  ad::Var objective = ad::Add(ad::Add(label, reg), l_domain);
  m.l_vw = label.value().item();
  m.r_wvw = reg.value().item();
  m.total = objective.value().item();
  m.l_domain = l_domain.value().item();
  if (config.check_stop_gradient) {
    const std::vector<ad::Var> theta = p.net.Params();
    for (const Tensor& g : p.tape.Gradients(l_domain, theta)) {
      m.domain_grad_theta = std::max(m.domain_grad_theta, MaxAbs(g));
    }
  }
  Targets t = CollectTargets(p, false, false);
  t.wrt.push_back(p.phi);
  const std::vector<Tensor> g = p.tape.Gradients(objective, t.wrt);
  ApplyAll(state, t, g, config);
  Sgd(state.domain.phi, g.back(), config.eta);
  return m;
}

StepMetrics TrainStep(TrainState& state, const DomainBatch& batch,
                      const TrainConfig& config, StepRngs& rngs) {
  switch (config.strategy) {
    case Strategy::kMct: return MctStep(state, batch, config, rngs);
    case Strategy::kCrossgrad: return CrossgradStep(state, batch, config, rngs);
    case Strategy::kE2eCe: return E2eCeStep(state, batch, config);
    case Strategy::kE2eSvm: return E2eSvmStep(state, batch, config);
    case Strategy::kErm: return ErmStep(state, batch, config);
    case Strategy::kMixup: return MixupStep(state, batch, config, rngs);
    case Strategy::kDann: return DannStep(state, batch, config);
  }
  throw std::logic_error("unhandled strategy");
}

TrainingDiverged::TrainingDiverged(std::size_t step, const std::string& what)
    : std::runtime_error("training diverged at step " + std::to_string(step) +
                         ": " + what),
      step_(step) {}

Tensor PredictVw(const TrainState& state, const Tensor& x) {
  return heads::LinearLogits(state.net.Embed(x), state.heads.w_vw);
}

Tensor PredictBias(const TrainState& state, std::size_t domain,
                   const Tensor& x) {
  return heads::LinearLogits(state.net.Embed(x),
                             state.heads.Composed(domain));
}

TrainResult Train(const TrainConfig& config,
                  std::span<const DomainData> domains,
                  const DomainData* validation, const TrainState* initial) {
  config.Validate();
  if (domains.empty()) throw std::invalid_argument("train: no domains");
  if (UsesBiasHeads(config.strategy) && domains.size() < 2) {
    throw std::invalid_argument("train: strategy " + ToString(config.strategy) +
                                " needs at least 2 training domains");
  }
  for (std::size_t d = 0; d < domains.size(); ++d) {
    const DomainData& dom = domains[d];
    if (dom.x.rows() != dom.y.rows() || dom.x.rows() == 0 ||
        dom.x.cols() != domains[0].x.cols() ||
        dom.y.cols() != domains[0].y.cols()) {
      throw std::invalid_argument("train: domain " + std::to_string(d) +
                                  " is empty or has mismatched columns");
    }
    loss::ValidateTargets(dom.y, config.task_mode);
  }
  TrainResult result;
  result.state = initial != nullptr
                     ? *initial
                     : InitState(config, domains[0].x.cols(),
                                 domains[0].y.cols(), domains.size());
  if (result.state.heads.n_domains() != domains.size()) {
    throw std::invalid_argument("train: model has " +
                                std::to_string(result.state.heads.n_domains()) +
                                " domain heads for " +
                                std::to_string(domains.size()) + " domains");
  }
  Rng batch_rng(DeriveSeed(config.seed, kBatchStream));
  StepRngs rngs = MakeStepRngs(config.seed);
  auto validate = [&](std::size_t step) {
    if (validation == nullptr) return;
    const Tensor logits = PredictVw(result.state, validation->x);
    result.validation.push_back(
        {step, metrics::TaskScore(logits, validation->y, config.task_mode)});
  };
  for (std::size_t step = 1; step <= config.steps; ++step) {
    const DomainBatch batch = SampleBatch(domains, config.batch_size, batch_rng);
    StepMetrics m;
    try {
      m = TrainStep(result.state, batch, config, rngs);
    } catch (const ad::AutodiffError& e) {
      if (std::string(e.what()).find("non-finite") == std::string::npos) throw;
      throw TrainingDiverged(step, e.what());
    }
    m.step = step;
    if (!IsFinite(m.total) || !IsFinite(m.l_domain)) {
      throw TrainingDiverged(step, "non-finite loss");
    }
    result.history.push_back(std::move(m));
    if (config.eval_every > 0 && step % config.eval_every == 0 &&
        step != config.steps) {
      validate(step);
    }
  }
  validate(config.steps);
  return result;
}

std::string HistoryCsv(std::span<const StepMetrics> history) {
  std::ostringstream out;
  out << "step,L_vw,L_bias,L_aug,R_wvw,R_delta,R_alpha,L_domain,total,tap\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (const StepMetrics& m : history) {
    out << m.step << ',' << num(m.l_vw) << ',' << num(m.l_bias) << ','
        << num(m.l_aug) << ',' << num(m.r_wvw) << ',' << num(m.r_delta) << ','
        << num(m.r_alpha) << ',' << num(m.l_domain) << ',' << num(m.total)
        << ',' << m.tap << '\n';
  }
  return out.str();
}

}  // namespace debias::train
