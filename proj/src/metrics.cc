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

#include "debias/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "debias/autodiff.h"
#include "debias/random.h"

namespace debias::metrics {
namespace {

std::size_t ArgMax(std::span<const double> row) {
  return static_cast<std::size_t>(
      std::max_element(row.begin(), row.end()) - row.begin());
}

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Standardizes columns with statistics of `fit`.
struct Standardizer {
  std::vector<double> mean, scale;

  explicit Standardizer(const Tensor& fit) {
    const std::size_t n = fit.rows(), d = fit.cols();
    mean.assign(d, 0.0);
    scale.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) mean[j] += fit.at(i, j);
    }
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double c = fit.at(i, j) - mean[j];
        scale[j] += c * c;
      }
    }
    for (double& s : scale) {
      s = std::sqrt(s / static_cast<double>(n));
      s = s > 1e-12 ? 1.0 / s : 0.0;
    }
  }

  Tensor Apply(const Tensor& x) const {
    Tensor out = x;
    const std::size_t d = x.cols();
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        out.at(i, j) = (x.at(i, j) - mean[j]) * scale[j];
      }
    }
    return out;
  }
};

struct Probe {
  std::vector<Tensor> params;  // linear: {W}; hidden: {W1, b1, W2}
  ProbeKind kind;
};

ad::Var ProbeLogits(const Probe& probe, const std::vector<ad::Var>& p,
                    const ad::Var& x) {
  if (probe.kind == ProbeKind::kLinear) {
    return ad::Matmul(ad::AppendOnes(x), p[0]);
  }
  ad::Var h = ad::Relu(ad::Affine(x, p[0], p[1]));
  return ad::Matmul(ad::AppendOnes(h), p[2]);
}

Tensor GlorotInit(std::size_t rows, std::size_t cols, Rng& rng) {
  const double b = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-b, b);
  Tensor t(Shape{rows, cols});
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Full-batch gradient descent with heavy-ball momentum.
Probe FitProbe(const Tensor& x, const Tensor& y, const C2stConfig& config,
               Rng& rng) {
  const std::size_t d = x.cols(), k = y.cols();
  Probe probe{{}, config.probe};
  if (config.probe == ProbeKind::kLinear) {
    probe.params.push_back(Tensor::Zeros({d + 1, k}));
  } else {
    const std::size_t h = config.hidden_units;
    probe.params.push_back(GlorotInit(d, h, rng));
    probe.params.push_back(Tensor::Zeros({1, h}));
    probe.params.push_back(GlorotInit(h + 1, k, rng));
  }
  std::vector<Tensor> velocity;
  for (const Tensor& t : probe.params) velocity.push_back(Tensor::ZerosLike(t));
  for (std::size_t it = 0; it < config.iterations; ++it) {
    ad::Tape tape;
    std::vector<ad::Var> p;
    for (const Tensor& t : probe.params) p.push_back(tape.Leaf(t));
    ad::Var logits = ProbeLogits(probe, p, tape.Constant(x));
    ad::Var objective =
        loss::TaskLoss(logits, y, loss::TaskMode::kSoftmaxCe);
    if (config.l2 > 0.0) {
      for (const ad::Var& v : p) {
        objective = ad::Add(objective,
                            ad::Scale(ad::SquaredNorm(v), config.l2));
      }
    }
    const std::vector<Tensor> g = tape.Gradients(objective, p);
    for (std::size_t j = 0; j < p.size(); ++j) {
      Tensor& v = velocity[j];
      Tensor& w = probe.params[j];
      for (std::size_t q = 0; q < w.size(); ++q) {
        v[q] = config.momentum * v[q] - config.learning_rate * g[j][q];
        w[q] += v[q];
      }
    }
  }
  return probe;
}

Tensor PredictProbe(const Probe& probe, const Tensor& x) {
  ad::Tape tape;
  std::vector<ad::Var> p;
  for (const Tensor& t : probe.params) p.push_back(tape.Constant(t));
  return ProbeLogits(probe, p, tape.Constant(x)).value();
}

}  // namespace

double Accuracy(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape() || logits.rows() == 0) {
    throw std::invalid_argument("accuracy: logits " +
                                ShapeString(logits.shape()) + " vs targets " +
                                ShapeString(targets.shape()));
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (ArgMax(logits.row(i)) == ArgMax(targets.row(i))) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(logits.rows());
}

double Auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("auc: scores and labels differ in length");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney: average ranks over tie groups.
  double rank_sum = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      const int l = labels[order[k]];
      if (l != 0 && l != 1) {
        throw std::invalid_argument("auc: labels must be 0 or 1");
      }
      if (l == 1) {
        rank_sum += avg_rank;
        ++n_pos;
      } else {
        ++n_neg;
      }
    }
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument(
        "auc: undefined with a single class (" + std::to_string(n_pos) +
        " positives, " + std::to_string(n_neg) + " negatives)");
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double MacroAuc(const Tensor& scores, const Tensor& targets) {
  if (scores.shape() != targets.shape()) {
    throw std::invalid_argument("macro auc: shape mismatch");
  }
  double sum = 0.0;
  std::size_t used = 0;
  std::vector<double> s(scores.rows());
  std::vector<int> l(scores.rows());
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < scores.rows(); ++i) {
      s[i] = scores.at(i, c);
      l[i] = targets.at(i, c) > 0.5 ? 1 : 0;
      pos += static_cast<std::size_t>(l[i]);
    }
    if (pos == 0 || pos == scores.rows()) continue;
    sum += Auc(s, l);
    ++used;
  }
  if (used == 0) throw std::invalid_argument("macro auc: no column has both classes");
  return sum / static_cast<double>(used);
}

double TaskScore(const Tensor& logits, const Tensor& targets,
                 loss::TaskMode mode) {
  return mode == loss::TaskMode::kSoftmaxCe ? Accuracy(logits, targets)
                                            : MacroAuc(logits, targets);
}

BiasReport CrossDatasetReport(const std::map<std::string, double>& scores,
                              std::span<const std::string> internal,
                              std::span<const std::string> external) {
  if (external.empty()) throw std::invalid_argument("report: external set is empty");
  if (internal.empty()) throw std::invalid_argument("report: internal set is empty");
  std::set<std::string> seen;
  for (const std::string& d : internal) seen.insert(d);
  for (const std::string& d : external) {
    if (seen.count(d)) {
      throw std::invalid_argument("report: domain '" + d +
                                  "' is both internal and external");
    }
  }
  auto mean_of = [&](std::span<const std::string> names) {
    double s = 0.0;
    for (const std::string& d : names) {
      auto it = scores.find(d);
      if (it == scores.end()) {
        throw std::invalid_argument("report: no score for domain '" + d + "'");
      }
      s += it->second;
    }
    return s / static_cast<double>(names.size());
  };
  BiasReport r;
  r.self = mean_of(internal);
  r.others = mean_of(external);
  if (r.self > 0.0) r.pd = (r.self - r.others) / r.self;
  r.per_domain = scores;
  return r;
}

nlohmann::json ToJson(const BiasReport& r) {
  nlohmann::json j;
  j["self"] = r.self;
  j["others"] = r.others;
  j["pd"] = r.pd ? nlohmann::json(*r.pd) : nlohmann::json(nullptr);
  j["c2st_acc"] =
      r.c2st_acc ? nlohmann::json(*r.c2st_acc) : nlohmann::json(nullptr);
  j["per_domain"] = r.per_domain;
  return j;
}

BiasReport BiasReportFromJson(const nlohmann::json& j) {
  BiasReport r;
  r.self = j.at("self").get<double>();
  r.others = j.at("others").get<double>();
  if (!j.at("pd").is_null()) r.pd = j.at("pd").get<double>();
  if (j.contains("c2st_acc") && !j.at("c2st_acc").is_null()) {
    r.c2st_acc = j.at("c2st_acc").get<double>();
  }
  r.per_domain = j.at("per_domain").get<std::map<std::string, double>>();
  return r;
}

ProbeKind ParseProbeKind(const std::string& s) {
  if (s == "linear") return ProbeKind::kLinear;
  if (s == "mlp") return ProbeKind::kHiddenLayer;
  throw std::invalid_argument("unknown probe '" + s + "' (linear or mlp)");
}

std::string ToString(ProbeKind k) {
  return k == ProbeKind::kLinear ? "linear" : "mlp";
}

C2stResult C2st(std::span<const Tensor> sources, const C2stConfig& config) {
  if (sources.size() < 2) throw std::invalid_argument("c2st: need >= 2 sources");
  if (!(config.train_fraction > 0.0 && config.train_fraction < 1.0)) {
    throw std::invalid_argument("c2st: train_fraction must be in (0, 1)");
  }
  const std::size_t k = sources.size(), d = sources[0].cols();
  Rng rng(config.seed);
  std::vector<std::size_t> train_count(k), test_count(k);
  std::vector<std::vector<std::size_t>> perm(k);
  for (std::size_t s = 0; s < k; ++s) {
    if (sources[s].rank() != 2 || sources[s].rows() == 0 ||
        sources[s].cols() != d) {
      throw std::invalid_argument("c2st: source " + std::to_string(s) +
                                  " is empty or has a different width");
    }
    const std::size_t n = sources[s].rows();
    perm[s].resize(n);
    std::iota(perm[s].begin(), perm[s].end(), 0);
    std::shuffle(perm[s].begin(), perm[s].end(), rng);
    train_count[s] = static_cast<std::size_t>(
        std::llround(config.train_fraction * static_cast<double>(n)));
    test_count[s] = n - train_count[s];
    if (train_count[s] == 0 || test_count[s] == 0) {
      throw std::invalid_argument("c2st: source " + std::to_string(s) +
                                  " leaves an empty train or test split");
    }
  }
  const std::size_t n_train =
      std::accumulate(train_count.begin(), train_count.end(), std::size_t{0});
  const std::size_t n_test =
      std::accumulate(test_count.begin(), test_count.end(), std::size_t{0});
  Tensor xtr(Shape{n_train, d}), ytr(Shape{n_train, k});
  Tensor xte(Shape{n_test, d}), yte(Shape{n_test, k});
  std::size_t a = 0, b = 0;
  for (std::size_t s = 0; s < k; ++s) {
    for (std::size_t i = 0; i < perm[s].size(); ++i) {
      const auto row = sources[s].row(perm[s][i]);
      if (i < train_count[s]) {
        std::copy(row.begin(), row.end(), xtr.row(a).begin());
        ytr.at(a++, s) = 1.0;
      } else {
        std::copy(row.begin(), row.end(), xte.row(b).begin());
        yte.at(b++, s) = 1.0;
      }
    }
  }
  const Standardizer standardizer(xtr);
  const Probe probe =
      FitProbe(standardizer.Apply(xtr), ytr, config, rng);
  C2stResult r;
  r.accuracy = Accuracy(PredictProbe(probe, standardizer.Apply(xte)), yte);
  r.n_train = n_train;
  r.n_test = n_test;
  r.chance = static_cast<double>(
                 *std::max_element(test_count.begin(), test_count.end())) /
             static_cast<double>(n_test);
  r.threshold = r.chance + 1.6448536269514722 *
                               std::sqrt(r.chance * (1.0 - r.chance) /
                                         static_cast<double>(n_test));
  r.distinguishable = r.accuracy > r.threshold;
  return r;
}

C2stResult C2st(const Tensor& a, const Tensor& b, const C2stConfig& config) {
  const std::vector<Tensor> sources = {a, b};
  return C2st(sources, config);
}

C2stResult C2stRepeated(std::span<const Tensor> sources,
                        const C2stConfig& config, std::size_t repeats) {
  if (repeats == 0) throw std::invalid_argument("c2st: repeats must be > 0");
  C2stResult mean;
  for (std::size_t r = 0; r < repeats; ++r) {
    C2stConfig c = config;
    c.seed = config.seed + r;
    const C2stResult one = C2st(sources, c);
    mean.accuracy += one.accuracy / static_cast<double>(repeats);
    mean.chance = one.chance;
    mean.threshold = one.threshold;
    mean.n_train = one.n_train;
    mean.n_test = one.n_test;
  }
  mean.distinguishable = mean.accuracy > mean.threshold;
  return mean;
}

Projection PrincipalProjection(const Tensor& x, std::size_t k, double tol) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n < 2 || k == 0 || k > d) {
    throw std::invalid_argument("projection: need >= 2 rows and 1 <= k <= dim");
  }
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += x.at(i, j);
  }
  for (double& m : mean) m /= static_cast<double>(n);
  Tensor centered(Shape{n, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) centered.at(i, j) = x.at(i, j) - mean[j];
  }
  Tensor cov(Shape{d, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      const double ca = centered.at(i, a);
      for (std::size_t b = 0; b < d; ++b) cov.at(a, b) += ca * centered.at(i, b);
    }
  }
  for (double& v : cov.data()) v /= static_cast<double>(n - 1);

  Projection p;
  p.components = Tensor(Shape{k, d});
  Rng rng(0x5eed);
  std::normal_distribution<double> normal;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> v(d), w(d);
    for (double& e : v) e = normal(rng);
    double lambda = 0.0;
    for (int it = 0; it < 100000; ++it) {
      for (std::size_t a = 0; a < d; ++a) {
        double s = 0.0;
        for (std::size_t b = 0; b < d; ++b) s += cov.at(a, b) * v[b];
        w[a] = s;
      }
      double norm = 0.0;
      for (double e : w) norm += e * e;
      norm = std::sqrt(norm);
      if (norm == 0.0) break;
      double diff = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        w[a] /= norm;
        diff = std::max(diff, std::abs(w[a] - v[a]));
      }
      v.swap(w);
      lambda = norm;
      if (diff < tol) break;
    }
    // Fix the sign so the largest-magnitude entry is positive.
    const std::size_t big = static_cast<std::size_t>(
        std::max_element(v.begin(), v.end(),
                         [](double a, double b) {
                           return std::abs(a) < std::abs(b);
                         }) -
        v.begin());
    if (v[big] < 0) {
      for (double& e : v) e = -e;
    }
    for (std::size_t a = 0; a < d; ++a) {
      p.components.at(c, a) = v[a];
      for (std::size_t b = 0; b < d; ++b) cov.at(a, b) -= lambda * v[a] * v[b];
    }
  }
  p.coords = Tensor(Shape{n, k});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (std::size_t a = 0; a < d; ++a) s += centered.at(i, a) * p.components.at(c, a);
      p.coords.at(i, c) = s;
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += p.coords.at(i, c) * p.coords.at(i, c);
    p.variances.push_back(s / static_cast<double>(n - 1));
  }
  return p;
}

std::string EmbeddingsCsv(const Tensor& z, std::span<const std::string> domain,
                          std::span<const int> label) {
  if (domain.size() != z.rows() || label.size() != z.rows()) {
    throw std::invalid_argument("embeddings csv: row count mismatch");
  }
  std::ostringstream out;
  out << "domain,label";
  for (std::size_t j = 0; j < z.cols(); ++j) out << ",z_" << (j + 1);
  out << '\n';
  for (std::size_t i = 0; i < z.rows(); ++i) {
    out << domain[i] << ',' << label[i];
    for (double v : z.row(i)) out << ',' << Num(v);
    out << '\n';
  }
  return out.str();
}

std::string ProjectionCsv(const Projection& p,
                          std::span<const std::string> domain,
                          std::span<const int> label) {
  if (domain.size() != p.coords.rows() || label.size() != p.coords.rows()) {
    throw std::invalid_argument("projection csv: row count mismatch");
  }
  std::ostringstream out;
  out << "domain,label";
  for (std::size_t j = 0; j < p.coords.cols(); ++j) out << ",pc" << (j + 1);
  out << '\n';
  for (std::size_t i = 0; i < p.coords.rows(); ++i) {
    out << domain[i] << ',' << label[i];
    for (double v : p.coords.row(i)) out << ',' << Num(v);
    out << '\n';
  }
  return out.str();
}

}  // namespace debias::metrics
