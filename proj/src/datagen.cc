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

#include "debias/datagen.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <stdexcept>

#include "debias/dataset_io.h"
#include "debias/random.h"

namespace debias::data {
namespace {

constexpr double kTrainShare = 0.7;
constexpr double kValShare = 0.1;

std::vector<double> UnitVector(std::size_t d, Rng& rng) {
  std::normal_distribution<double> n;
  std::vector<double> v(d);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& e : v) {
      e = n(rng);
      norm += e * e;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& e : v) e /= norm;
  return v;
}

void Normalize(std::vector<double>& v) {
  double norm = 0.0;
  for (double e : v) norm += e * e;
  norm = std::sqrt(norm);
  if (norm == 0.0) return;
  for (double& e : v) e /= norm;
}

std::int64_t GlobalId(std::size_t domain, std::size_t index) {
  return (static_cast<std::int64_t>(domain) << 32) |
         static_cast<std::int64_t>(index);
}

// Reorders rows by plan and stamps the split ranges.
void ApplyPlan(DomainDataset& ds, const SplitPlan& plan) {
  ds.x = SelectRows(ds.x, plan.order);
  ds.y = SelectRows(ds.y, plan.order);
  std::vector<std::int64_t> entity, sample;
  for (std::size_t r : plan.order) {
    entity.push_back(ds.entity[r]);
    sample.push_back(ds.sample_id[r]);
  }
  ds.entity = std::move(entity);
  ds.sample_id = std::move(sample);
  ds.train = plan.train;
  ds.val = plan.val;
  ds.test = plan.test;
}

std::vector<std::int64_t> GroupedEntities(std::size_t domain, std::size_t n,
                                          std::size_t group) {
  std::vector<std::int64_t> e(n);
  for (std::size_t r = 0; r < n; ++r) e[r] = GlobalId(domain, r / group);
  return e;
}

// Seven-segment layout on a box of half-width 2.5 and half-height 4, in
// pixels of a 16x16 grid, y pointing down.
struct Segment {
  double x0, y0, x1, y1;
};
constexpr std::array<Segment, 7> kSegments = {{
    {-2.5, -4, 2.5, -4},  // a top
    {2.5, -4, 2.5, 0},    // b upper right
    {2.5, 0, 2.5, 4},     // c lower right
    {-2.5, 4, 2.5, 4},    // d bottom
    {-2.5, 0, -2.5, 4},   // e lower left
    {-2.5, -4, -2.5, 0},  // f upper left
    {-2.5, 0, 2.5, 0},    // g middle
}};
// Bit k set when segment k is lit.
constexpr std::array<unsigned, 10> kDigits = {
    0b0111111, 0b0000110, 0b1011011, 0b1001111, 0b1100110,
    0b1101101, 0b1111101, 0b0000111, 0b1111111, 0b1101111};

double SegmentDistance(double px, double py, const Segment& s) {
  const double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - s.x0) * vx + (py - s.y0) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (s.x0 + t * vx), dy = py - (s.y0 + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

void FinishDomain(DomainDataset& ds, std::uint64_t split_seed) {
  ApplyPlan(ds, PlanSplits(ds.entity, split_seed));
  ds.Validate();
}

}  // namespace

std::string ToString(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

const RowRange& DomainDataset::range(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kVal: return val;
    case Split::kTest: return test;
  }
  return train;
}

namespace {
std::vector<std::size_t> RangeIndices(const RowRange& r) {
  std::vector<std::size_t> idx(r.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = r.begin + k;
  return idx;
}
}  // namespace

Tensor DomainDataset::SplitX(Split s) const {
  return SelectRows(x, RangeIndices(range(s)));
}

Tensor DomainDataset::SplitY(Split s) const {
  return SelectRows(y, RangeIndices(range(s)));
}

std::vector<int> DomainDataset::SplitLabels(Split s) const {
  std::vector<int> out;
  const RowRange& r = range(s);
  for (std::size_t i = r.begin; i < r.end; ++i) {
    const auto row = y.row(i);
    out.push_back(static_cast<int>(
        std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return out;
}

void DomainDataset::Validate() const {
  const std::string who = "dataset '" + name + "': ";
  if (x.rank() != 2 || y.rank() != 2 || x.rows() != y.rows()) {
    throw std::invalid_argument(who + "feature and label row counts differ");
  }
  if (entity.size() != x.rows() || sample_id.size() != x.rows()) {
    throw std::invalid_argument(who + "entity/sample id columns do not match rows");
  }
  ValidateSplitRanges(train, val, test, x.rows(), who);
  std::map<std::int64_t, int> where;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    const RowRange& r = range(s);
    for (std::size_t i = r.begin; i < r.end; ++i) {
      auto [it, fresh] = where.emplace(entity[i], static_cast<int>(s));
      if (!fresh && it->second != static_cast<int>(s)) {
        throw std::invalid_argument(who + "entity " + std::to_string(entity[i]) +
                                    " straddles splits");
      }
    }
  }
}

void ConfoundSpec::Validate() const {
  auto fail = [](const std::string& m) {
    throw std::invalid_argument("confound spec: " + m);
  };
  if (n_internal == 0) fail("need at least one internal domain");
  if (d_common == 0 || d_bias == 0) fail("block dims must be >= 1");
  if (n_classes < 2) fail("need at least 2 classes");
  if (!(sigma >= 0.0)) fail("sigma must be >= 0");
  if (rho.empty() || (rho.size() != 1 && rho.size() != n_internal)) {
    fail("rho needs 1 or n_internal values");
  }
  for (double r : rho) {
    if (!(r >= -1.0 && r <= 1.0)) fail("rho must lie in [-1, 1]");
  }
  if (!(rho_external >= -1.0 && rho_external <= 1.0)) {
    fail("rho_external must lie in [-1, 1]");
  }
  if (!(style_alignment >= 0.0 && style_alignment <= 1.0)) {
    fail("style_alignment must lie in [0, 1]");
  }
  if (samples_per_domain == 0) fail("samples_per_domain must be > 0");
  if (entity_group == 0) fail("entity_group must be > 0");
}

double ConfoundSpec::RhoOf(std::size_t i) const {
  return rho.size() == 1 ? rho[0] : rho[i];
}

nlohmann::json ConfoundSpec::ToJson() const {
  return {{"n_internal", n_internal},   {"with_external", with_external},
          {"d_common", d_common},       {"d_bias", d_bias},
          {"n_classes", n_classes},     {"mu", mu},
          {"sigma", sigma},             {"rho", rho},
          {"rho_external", rho_external}, {"style", style},
          {"style_alignment", style_alignment},
          {"samples_per_domain", samples_per_domain},
          {"entity_group", entity_group}};
}

ConfoundSpec ConfoundSpec::FromJson(const nlohmann::json& j) {
  ConfoundSpec s;
  s.n_internal = j.value("n_internal", s.n_internal);
  s.with_external = j.value("with_external", s.with_external);
  s.d_common = j.value("d_common", s.d_common);
  s.d_bias = j.value("d_bias", s.d_bias);
  s.n_classes = j.value("n_classes", s.n_classes);
  s.mu = j.value("mu", s.mu);
  s.sigma = j.value("sigma", s.sigma);
  s.rho = j.value("rho", s.rho);
  s.rho_external = j.value("rho_external", s.rho_external);
  s.style = j.value("style", s.style);
  s.style_alignment = j.value("style_alignment", s.style_alignment);
  s.samples_per_domain = j.value("samples_per_domain", s.samples_per_domain);
  s.entity_group = j.value("entity_group", s.entity_group);
  s.Validate();
  return s;
}

std::vector<DomainDataset> GenBiasedDomains(const ConfoundSpec& spec,
                                            std::uint64_t seed) {
  spec.Validate();
  const std::size_t k = spec.n_classes, dc = spec.d_common, db = spec.d_bias;
  const std::size_t n_dom = spec.n_internal + (spec.with_external ? 1 : 0);
  Rng dir_rng(DeriveSeed(seed, 1));
  std::vector<std::vector<double>> dir_c, dir_b, style_dir;
  for (std::size_t c = 0; c < k; ++c) dir_c.push_back(UnitVector(dc, dir_rng));
  for (std::size_t c = 0; c < k; ++c) dir_b.push_back(UnitVector(db, dir_rng));
  for (std::size_t d = 0; d < n_dom; ++d) style_dir.push_back(UnitVector(db, dir_rng));
  if (spec.style_alignment > 0.0) {
    // Tilt every style direction toward the contrast between the first two
    // classes' bias directions.
    std::vector<double> axis(db);
    for (std::size_t j = 0; j < db; ++j) axis[j] = dir_b[1][j] - dir_b[0][j];
    Normalize(axis);
    for (auto& u : style_dir) {
      for (std::size_t j = 0; j < db; ++j) {
        u[j] = spec.style_alignment * axis[j] + (1.0 - spec.style_alignment) * u[j];
      }
      Normalize(u);
    }
  }

  std::vector<DomainDataset> out;
  for (std::size_t d = 0; d < n_dom; ++d) {
    const bool external = d >= spec.n_internal;
    Rng rng(DeriveSeed(seed, 100 + d));
    std::uniform_int_distribution<std::size_t> cls(0, k - 1);
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::size_t n = spec.samples_per_domain;
    DomainDataset ds;
    ds.name = external ? "ext" : "d" + std::to_string(d + 1);
    ds.domain_id = static_cast<std::int64_t>(d);
    ds.x = Tensor(Shape{n, spec.feature_dim()});
    ds.y = Tensor(Shape{n, k});
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t c = cls(rng);
      ds.y.at(r, c) = 1.0;
      auto row = ds.x.row(r);
      for (std::size_t j = 0; j < dc; ++j) {
        row[j] = spec.mu * dir_c[c][j] + spec.sigma * noise(rng);
      }
      for (std::size_t slot = 0; slot < spec.n_internal; ++slot) {
        const bool carries = external || slot == d;
        const double rho = external ? spec.rho_external : spec.RhoOf(d);
        for (std::size_t j = 0; j < db; ++j) {
          double v = spec.sigma * noise(rng);
          if (carries) {
            v += rho * spec.mu * dir_b[c][j] + spec.style * style_dir[d][j];
          }
          row[dc + slot * db + j] = v;
        }
      }
      ds.sample_id.push_back(GlobalId(d, r));
    }
    ds.entity = GroupedEntities(d, n, spec.entity_group);
    ds.provenance = {{"generator", "confounded"},
                     {"seed", seed},
                     {"spec", spec.ToJson()}};
    FinishDomain(ds, DeriveSeed(seed, 200 + d));
    out.push_back(std::move(ds));
  }
  return out;
}

void RotatedSpec::Validate() const {
  auto fail = [](const std::string& m) {
    throw std::invalid_argument("rotated spec: " + m);
  };
  if (angles.empty()) fail("need at least one angle");
  if (samples_per_domain == 0) fail("samples_per_domain must be > 0");
  if (image_size < 8) fail("image_size must be >= 8");
  if (!(pixel_noise >= 0.0)) fail("pixel_noise must be >= 0");
  if (entity_group == 0) fail("entity_group must be > 0");
  if (idx_images.empty() != idx_labels.empty()) {
    fail("idx_images and idx_labels must be given together");
  }
}

nlohmann::json RotatedSpec::ToJson() const {
  return {{"angles", angles},
          {"samples_per_domain", samples_per_domain},
          {"image_size", image_size},
          {"pixel_noise", pixel_noise},
          {"entity_group", entity_group},
          {"idx_images", idx_images},
          {"idx_labels", idx_labels}};
}

RotatedSpec RotatedSpec::FromJson(const nlohmann::json& j) {
  RotatedSpec s;
  s.angles = j.value("angles", s.angles);
  s.samples_per_domain = j.value("samples_per_domain", s.samples_per_domain);
  s.image_size = j.value("image_size", s.image_size);
  s.pixel_noise = j.value("pixel_noise", s.pixel_noise);
  s.entity_group = j.value("entity_group", s.entity_group);
  s.idx_images = j.value("idx_images", s.idx_images);
  s.idx_labels = j.value("idx_labels", s.idx_labels);
  s.Validate();
  return s;
}

std::vector<double> RenderGlyph(int digit, std::size_t size, double dx,
                                double dy, double half_width) {
  if (digit < 0 || digit > 9) {
    throw std::invalid_argument("glyph: digit must be in 0..9");
  }
  const double scale = static_cast<double>(size) / 16.0;
  const double cx = 0.5 * static_cast<double>(size - 1) + dx;
  const double cy = 0.5 * static_cast<double>(size - 1) + dy;
  std::vector<double> img(size * size, 0.0);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      const double px = (static_cast<double>(c) - cx) / scale;
      const double py = (static_cast<double>(r) - cy) / scale;
      double dist = 1e9;
      for (std::size_t s = 0; s < kSegments.size(); ++s) {
        if (kDigits[digit] & (1u << s)) {
          dist = std::min(dist, SegmentDistance(px, py, kSegments[s]));
        }
      }
      img[r * size + c] = std::clamp(1.0 - (dist - half_width) / 0.75, 0.0, 1.0);
    }
  }
  return img;
}

std::vector<double> RotateImage(std::span<const double> image,
                                std::size_t height, std::size_t width,
                                double degrees) {
  if (image.size() != height * width) {
    throw std::invalid_argument("rotate: image has " +
                                std::to_string(image.size()) +
                                " pixels, expected " +
                                std::to_string(height * width));
  }
  double s = 0.0, c = 1.0;
  const double turns = degrees / 90.0;
  if (turns == std::round(turns)) {
    const long q = ((static_cast<long>(std::round(turns)) % 4) + 4) % 4;
    constexpr int kSin[4] = {0, 1, 0, -1};
    constexpr int kCos[4] = {1, 0, -1, 0};
    s = kSin[q];
    c = kCos[q];
  } else {
    const double rad = degrees * std::numbers::pi / 180.0;
    s = std::sin(rad);
    c = std::cos(rad);
  }
  const double cx = 0.5 * static_cast<double>(width - 1);
  const double cy = 0.5 * static_cast<double>(height - 1);
  auto pixel = [&](long r, long col) -> double {
    if (r < 0 || col < 0 || r >= static_cast<long>(height) ||
        col >= static_cast<long>(width)) {
      return 0.0;
    }
    return image[static_cast<std::size_t>(r) * width +
                 static_cast<std::size_t>(col)];
  };
  std::vector<double> out(height * width, 0.0);
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t col = 0; col < width; ++col) {
      // Inverse map: rotate the destination point back by -degrees. With y
      // pointing down, a counter-clockwise turn on screen is (x, -y) space.
      const double x = static_cast<double>(col) - cx;
      const double y = cy - static_cast<double>(r);
      const double sx = c * x + s * y;
      const double sy = -s * x + c * y;
      const double fc = sx + cx;
      const double fr = cy - sy;
      const double r0 = std::floor(fr), c0 = std::floor(fc);
      const double tr = fr - r0, tc = fc - c0;
      const long ir = static_cast<long>(r0), ic = static_cast<long>(c0);
      double v = (1.0 - tr) * (1.0 - tc) * pixel(ir, ic);
      if (tc != 0.0) v += (1.0 - tr) * tc * pixel(ir, ic + 1);
      if (tr != 0.0) v += tr * (1.0 - tc) * pixel(ir + 1, ic);
      if (tr != 0.0 && tc != 0.0) v += tr * tc * pixel(ir + 1, ic + 1);
      out[r * width + col] = v;
    }
  }
  return out;
}

std::vector<DomainDataset> GenRotated(const RotatedSpec& spec,
                                      std::uint64_t seed) {
  spec.Validate();
  const bool from_idx = !spec.idx_images.empty();
  IdxArray images, labels;
  std::size_t h = spec.image_size, w = spec.image_size, k = 10;
  if (from_idx) {
    images = ReadIdx(spec.idx_images);
    labels = ReadIdx(spec.idx_labels);
    if (images.dims.size() != 3 || labels.dims.size() != 1 ||
        images.dims[0] != labels.dims[0]) {
      throw std::invalid_argument(
          "rotated: expected an N x H x W image file and an N label file");
    }
    h = images.dims[1];
    w = images.dims[2];
    k = static_cast<std::size_t>(
            *std::max_element(labels.values.begin(), labels.values.end())) +
        1;
  }
  std::vector<DomainDataset> out;
  for (std::size_t d = 0; d < spec.angles.size(); ++d) {
    Rng rng(DeriveSeed(seed, 100 + d));
    std::uniform_int_distribution<int> digit(0, 9);
    std::uniform_real_distribution<double> shift(-1.0, 1.0), width(0.5, 0.9);
    std::normal_distribution<double> noise(0.0, spec.pixel_noise);
    const std::size_t n = spec.samples_per_domain;
    DomainDataset ds;
    char name[32];
    std::snprintf(name, sizeof(name), "rot%g", spec.angles[d]);
    ds.name = name;
    ds.domain_id = static_cast<std::int64_t>(d);
    ds.x = Tensor(Shape{n, h * w});
    ds.y = Tensor(Shape{n, k});
    ds.image_shape = {h, w};
    std::vector<std::size_t> pool;
    if (from_idx) {
      pool.resize(images.dims[0]);
      for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
      std::shuffle(pool.begin(), pool.end(), rng);
    }
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<double> img;
      std::size_t label = 0;
      if (from_idx) {
        const std::size_t src = pool[r % pool.size()];
        img.assign(images.values.begin() + src * h * w,
                   images.values.begin() + (src + 1) * h * w);
        for (double& v : img) v /= 255.0;
        label = static_cast<std::size_t>(labels.values[src]);
      } else {
        const int dg = digit(rng);
        label = static_cast<std::size_t>(dg);
        const double sx = shift(rng), sy = shift(rng);
        img = RenderGlyph(dg, h, sx, sy, width(rng));
      }
      img = RotateImage(img, h, w, spec.angles[d]);
      auto row = ds.x.row(r);
      for (std::size_t p = 0; p < h * w; ++p) {
        row[p] = img[p] + (spec.pixel_noise > 0 ? noise(rng) : 0.0);
      }
      ds.y.at(r, label) = 1.0;
      ds.sample_id.push_back(GlobalId(d, r));
    }
    ds.entity = GroupedEntities(d, n, spec.entity_group);
    ds.provenance = {{"generator", from_idx ? "rotated-idx" : "rotated-glyphs"},
                     {"seed", seed},
                     {"angle", spec.angles[d]},
                     {"spec", spec.ToJson()}};
    FinishDomain(ds, DeriveSeed(seed, 200 + d));
    out.push_back(std::move(ds));
  }
  return out;
}

SplitPlan PlanSplits(std::span<const std::int64_t> entity, std::uint64_t seed) {
  std::vector<std::int64_t> order;
  std::map<std::int64_t, std::vector<std::size_t>> members;
  for (std::size_t r = 0; r < entity.size(); ++r) {
    auto& m = members[entity[r]];
    if (m.empty()) order.push_back(entity[r]);
    m.push_back(r);
  }
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const double e = static_cast<double>(order.size());
  const auto train_end = static_cast<std::size_t>(std::llround(kTrainShare * e));
  const auto val_end =
      static_cast<std::size_t>(std::llround((kTrainShare + kValShare) * e));
  SplitPlan plan;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i == train_end) plan.train.end = plan.order.size();
    if (i == val_end) plan.val.end = plan.order.size();
    for (std::size_t r : members[order[i]]) plan.order.push_back(r);
  }
  if (train_end >= order.size()) plan.train.end = plan.order.size();
  if (val_end >= order.size()) plan.val.end = plan.order.size();
  plan.val.begin = plan.train.end;
  plan.test.begin = plan.val.end;
  plan.test.end = plan.order.size();
  return plan;
}

LodoSplit MakeLodoSplit(std::size_t n_domains, std::size_t held_out,
                        std::size_t min_internal) {
  if (held_out >= n_domains) {
    throw std::invalid_argument("lodo: held-out domain " +
                                std::to_string(held_out) + " does not exist (" +
                                std::to_string(n_domains) + " domains)");
  }
  LodoSplit s;
  s.external = held_out;
  for (std::size_t d = 0; d < n_domains; ++d) {
    if (d != held_out) s.internal.push_back(d);
  }
  if (s.internal.size() < min_internal) {
    throw std::invalid_argument("lodo: " + std::to_string(s.internal.size()) +
                                " internal domains, need at least " +
                                std::to_string(min_internal));
  }
  return s;
}

LodoSplit MakeLodoSplit(std::span<const DomainDataset> domains,
                        const std::string& held_out, std::size_t min_internal) {
  for (std::size_t d = 0; d < domains.size(); ++d) {
    if (domains[d].name == held_out) {
      return MakeLodoSplit(domains.size(), d, min_internal);
    }
  }
  throw std::invalid_argument("lodo: no domain named '" + held_out + "'");
}

}  // namespace debias::data
