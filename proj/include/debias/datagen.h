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

// Synthetic multi-domain data.
//
// Confounded domains: features are [common | bias slot 1 | ... | bias slot
// N]. The common block carries the class signal in every domain. Internal
// domain i also carries a class signal, with strength rho_i, in its own bias
// slot; the other slots are noise. The external domain carries rho_external
// in every slot, so a classifier that leans on bias slots fails there.
//
// Rotated glyphs: ten procedurally drawn seven-segment digits on a 16x16
// grid, each domain rotated by one angle.

#ifndef DEBIAS_DATAGEN_H_
#define DEBIAS_DATAGEN_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "debias/tensor.h"
#include "json.hpp"

namespace debias::data {

enum class Split { kTrain, kVal, kTest };
std::string ToString(Split s);

struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

// Rows are stored train | val | test.
struct DomainDataset {
  std::string name;
  std::int64_t domain_id = 0;
  Tensor x;  // n x d
  Tensor y;  // n x K, one-hot or multi-hot
  std::vector<std::int64_t> entity;
  std::vector<std::int64_t> sample_id;
  RowRange train, val, test;
  // Height and width when rows are images, else empty.
  std::vector<std::size_t> image_shape;
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t rows() const { return x.rows(); }
  const RowRange& range(Split s) const;
  Tensor SplitX(Split s) const;
  Tensor SplitY(Split s) const;
  std::vector<int> SplitLabels(Split s) const;  // argmax per row
  void Validate() const;
};

struct ConfoundSpec {
  std::size_t n_internal = 3;
  bool with_external = true;
  std::size_t d_common = 8;
  std::size_t d_bias = 8;
  std::size_t n_classes = 2;
  double mu = 1.0;
  double sigma = 1.0;
  // Per internal domain; a single value is broadcast.
  std::vector<double> rho = {0.9};
  double rho_external = -0.5;
  // Class-independent offset along a per-domain direction in the domain's
  // own slot (every slot for the external domain).
  double style = 0.0;
  // Fraction of each style direction laid along the contrast between the
  // first two classes' bias directions, so the domain marker and the
  // label-correlated artifact share an axis. 0 keeps them unrelated.
  double style_alignment = 0.0;
  std::size_t samples_per_domain = 10000;
  std::size_t entity_group = 2;

  void Validate() const;
  double RhoOf(std::size_t internal_index) const;
  std::size_t feature_dim() const { return d_common + n_internal * d_bias; }
  nlohmann::json ToJson() const;
  static ConfoundSpec FromJson(const nlohmann::json& j);
};

// Internal domains first ("d1".."dN"), then "ext" when requested.
std::vector<DomainDataset> GenBiasedDomains(const ConfoundSpec& spec,
                                            std::uint64_t seed);

struct RotatedSpec {
  std::vector<double> angles = {0, 15, 30, 45, 60, 75};
  std::size_t samples_per_domain = 1000;
  std::size_t image_size = 16;
  double pixel_noise = 0.05;
  std::size_t entity_group = 1;
  // IDX source; procedural glyphs when empty.
  std::string idx_images;
  std::string idx_labels;

  void Validate() const;
  nlohmann::json ToJson() const;
  static RotatedSpec FromJson(const nlohmann::json& j);
};

// One domain per angle, named "rot<angle>".
std::vector<DomainDataset> GenRotated(const RotatedSpec& spec,
                                      std::uint64_t seed);

// Renders glyph `digit` (0..9) with the given sub-pixel shift and stroke
// half-width on a size x size grid, values in [0, 1].
std::vector<double> RenderGlyph(int digit, std::size_t size, double dx,
                                double dy, double half_width);

// Bilinear rotation about the image centre, counter-clockwise in degrees.
// Samples falling outside the source read as 0. Multiples of 90 degrees use
// exact sine and cosine so they permute pixels.
std::vector<double> RotateImage(std::span<const double> image,
                                std::size_t height, std::size_t width,
                                double degrees);

// Entity-grouped 7:1:2 partition of `n` rows. Returns a row order (train
// entities first, then val, then test) and the three ranges over it.
struct SplitPlan {
  std::vector<std::size_t> order;
  RowRange train, val, test;
};
SplitPlan PlanSplits(std::span<const std::int64_t> entity, std::uint64_t seed);

struct LodoSplit {
  std::vector<std::size_t> internal;
  std::size_t external = 0;
};

// Holds out `held_out`; `min_internal` guards strategies that need several
// sources.
LodoSplit MakeLodoSplit(std::size_t n_domains, std::size_t held_out,
                        std::size_t min_internal = 2);
LodoSplit MakeLodoSplit(std::span<const DomainDataset> domains,
                        const std::string& held_out,
                        std::size_t min_internal = 2);

}  // namespace debias::data

#endif  // DEBIAS_DATAGEN_H_
