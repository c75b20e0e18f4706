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

#include "debias/checkpoint.h"

#include <cstring>
#include <stdexcept>
#include <string>

#include "debias/dataset_io.h"

namespace debias::ckpt {
namespace {

constexpr std::uint32_t kHasHeads = 1u << 0;
constexpr std::uint32_t kHasDomain = 1u << 1;

class Writer {
 public:
  template <typename T>
  void Put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void PutTensor(const Tensor& t) {
    for (double v : t.storage()) Put(v);
  }
  std::vector<std::uint8_t> Take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  template <typename T>
  T Get(const char* what) {
    if (pos_ + sizeof(T) > bytes_.size()) {
      throw std::runtime_error("checkpoint truncated at offset " +
                               std::to_string(pos_) + " reading " + what);
    }
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  Tensor GetTensor(std::size_t rows, std::size_t cols, const char* what) {
    Tensor t(Shape{rows, cols});
    for (double& v : t.storage()) v = Get<double>(what);
    return t;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> Encode(const Checkpoint& c) {
  Writer w;
  for (char ch : kMagic) w.Put(ch);
  w.Put(kVersion);
  const auto& layers = c.net.layers();
  w.Put(static_cast<std::uint32_t>(layers.size()));
  if (!layers.empty()) {
    w.Put(static_cast<std::uint64_t>(layers[0].weight.rows()));
    for (const auto& l : layers) w.Put(static_cast<std::uint64_t>(l.weight.cols()));
  }
  for (const auto& l : layers) w.Put(static_cast<std::uint8_t>(l.activation));
  for (const auto& l : layers) {
    w.PutTensor(l.weight);
    w.PutTensor(l.bias);
  }
  std::uint32_t flags = 0;
  if (c.heads) flags |= kHasHeads;
  if (c.domain) flags |= kHasDomain;
  w.Put(flags);
  if (c.heads) {
    const auto& h = *c.heads;
    h.Validate();
    w.Put(static_cast<std::uint64_t>(h.w_vw.rows()));
    w.Put(static_cast<std::uint64_t>(h.w_vw.cols()));
    w.Put(static_cast<std::uint64_t>(h.n_domains()));
    w.Put(static_cast<std::uint8_t>(h.scale_intercept ? 1 : 0));
    w.PutTensor(h.w_vw);
    for (std::size_t i = 0; i < h.n_domains(); ++i) {
      w.PutTensor(h.alpha[i]);
      w.PutTensor(h.delta[i]);
    }
  }
  if (c.domain) {
    w.Put(static_cast<std::uint64_t>(c.domain->phi.rows()));
    w.Put(static_cast<std::uint64_t>(c.domain->phi.cols()));
    w.PutTensor(c.domain->phi);
  }
  return w.Take();
}

Checkpoint Decode(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (char ch : kMagic) {
    if (r.Get<char>("magic") != ch) {
      throw std::runtime_error("checkpoint: bad magic");
    }
  }
  const auto version = r.Get<std::uint32_t>("version");
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  }
  const auto n_layers = r.Get<std::uint32_t>("layer count");
  std::vector<std::size_t> dims;
  if (n_layers > 0) {
    for (std::uint32_t i = 0; i <= n_layers; ++i) {
      dims.push_back(static_cast<std::size_t>(r.Get<std::uint64_t>("dims")));
    }
  }
  std::vector<net::DenseLayer> layers(n_layers);
  for (auto& l : layers) {
    const auto a = r.Get<std::uint8_t>("activation");
    if (a > 1) throw std::runtime_error("checkpoint: unknown activation " + std::to_string(a));
    l.activation = static_cast<net::Activation>(a);
  }
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    layers[i].weight = r.GetTensor(dims[i], dims[i + 1], "weights");
    layers[i].bias = r.GetTensor(1, dims[i + 1], "biases");
  }
  Checkpoint c;
  c.net = net::LayeredNet(std::move(layers));
  const auto flags = r.Get<std::uint32_t>("section flags");
  if (flags & ~(kHasHeads | kHasDomain)) {
    throw std::runtime_error("checkpoint: unknown section flags");
  }
  if (flags & kHasHeads) {
    heads::BiasHeadBank h;
    const auto rows = static_cast<std::size_t>(r.Get<std::uint64_t>("head rows"));
    const auto cols = static_cast<std::size_t>(r.Get<std::uint64_t>("head cols"));
    const auto n = static_cast<std::size_t>(r.Get<std::uint64_t>("head count"));
    h.scale_intercept = r.Get<std::uint8_t>("intercept flag") != 0;
    h.w_vw = r.GetTensor(rows, cols, "w_vw");
    for (std::size_t i = 0; i < n; ++i) {
      h.alpha.push_back(r.GetTensor(rows, cols, "alpha"));
      h.delta.push_back(r.GetTensor(rows, cols, "delta"));
    }
    h.Validate();
    c.heads = std::move(h);
  }
  if (flags & kHasDomain) {
    const auto rows = static_cast<std::size_t>(r.Get<std::uint64_t>("phi rows"));
    const auto cols = static_cast<std::size_t>(r.Get<std::uint64_t>("phi cols"));
    c.domain = heads::DomainClassifier{r.GetTensor(rows, cols, "phi")};
  }
  if (!r.done()) {
    throw std::runtime_error("checkpoint: trailing bytes after offset " +
                             std::to_string(r.pos()));
  }
  return c;
}

void Save(const Checkpoint& c, const std::filesystem::path& path) {
  data::WriteFileAtomic(path, Encode(c));
}

Checkpoint Load(const std::filesystem::path& path) {
  const auto bytes = data::ReadBytes(path);
  try {
    return Decode(bytes);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace debias::ckpt
