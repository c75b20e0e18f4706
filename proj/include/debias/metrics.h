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

// Scores, cross-dataset drop, classifier two-sample test and embedding export.

#ifndef DEBIAS_METRICS_H_
#define DEBIAS_METRICS_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "debias/losses.h"
#include "debias/tensor.h"
#include "json.hpp"

namespace debias::metrics {

// Fraction of rows whose argmax matches the argmax of the target row.
double Accuracy(const Tensor& logits, const Tensor& targets);

// Probability that a random positive outscores a random negative, ties
// counting one half. Throws unless both classes are present.
double Auc(std::span<const double> scores, std::span<const int> labels);

// Mean AUC over label columns that contain both classes.
double MacroAuc(const Tensor& scores, const Tensor& targets);

// Accuracy for single-label tasks, macro AUC for multi-label tasks.
double TaskScore(const Tensor& logits, const Tensor& targets,
                 loss::TaskMode mode);

struct BiasReport {
  double self = 0.0;
  double others = 0.0;
  std::optional<double> pd;  // missing when self == 0
  std::optional<double> c2st_acc;
  std::map<std::string, double> per_domain;
};

// self = mean score over `internal`, others = mean over `external`,
// pd = (self - others) / self.
BiasReport CrossDatasetReport(const std::map<std::string, double>& scores,
                              std::span<const std::string> internal,
                              std::span<const std::string> external);

nlohmann::json ToJson(const BiasReport& r);
BiasReport BiasReportFromJson(const nlohmann::json& j);

enum class ProbeKind { kLinear, kHiddenLayer };

ProbeKind ParseProbeKind(const std::string& s);
std::string ToString(ProbeKind k);

struct C2stConfig {
  ProbeKind probe = ProbeKind::kLinear;
  double train_fraction = 0.7;
  std::uint64_t seed = 1;
  std::size_t hidden_units = 16;
  std::size_t iterations = 300;
  double learning_rate = 0.5;
  double momentum = 0.9;
  double l2 = 1e-4;
};

struct C2stResult {
  double accuracy = 0.0;
  // Accuracy of always guessing the most frequent test source.
  double chance = 0.0;
  // Upper end of the one-sided 95% normal interval around chance.
  double threshold = 0.0;
  bool distinguishable = false;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

// Trains a probe to name the source of each row and reports held-out
// accuracy. `sources[k]` holds the rows of source k (two sources for the
// classic test, more for name-the-dataset). The split is stratified.
C2stResult C2st(std::span<const Tensor> sources, const C2stConfig& config);
C2stResult C2st(const Tensor& a, const Tensor& b, const C2stConfig& config);

// Mean accuracy over `repeats` seeds (config.seed, config.seed + 1, ...).
C2stResult C2stRepeated(std::span<const Tensor> sources,
                        const C2stConfig& config, std::size_t repeats);

struct Projection {
  Tensor coords;      // n x k
  Tensor components;  // k x d, unit rows
  std::vector<double> variances;
};

// Top-k principal components of the centered rows by power iteration with
// deflation; iteration stops when successive directions differ by < tol.
Projection PrincipalProjection(const Tensor& x, std::size_t k = 2,
                               double tol = 1e-8);

// Rows "domain,label,z_1..z_k".
std::string EmbeddingsCsv(const Tensor& z, std::span<const std::string> domain,
                          std::span<const int> label);
// Rows "domain,label,pc1,pc2".
std::string ProjectionCsv(const Projection& p,
                          std::span<const std::string> domain,
                          std::span<const int> label);

}  // namespace debias::metrics

#endif  // DEBIAS_METRICS_H_
