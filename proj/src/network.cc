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

#include "debias/network.h"

#include <cmath>
#include <random>
#include <stdexcept>

#include "debias/random.h"

namespace debias::net {

LayeredNet::LayeredNet(std::vector<DenseLayer> layers)
    : layers_(std::move(layers)) {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const DenseLayer& l = layers_[k];
    if (l.weight.rank() != 2 || l.weight.rows() == 0 || l.weight.cols() == 0) {
      throw std::invalid_argument("layer " + std::to_string(k + 1) +
                                  ": weight must be a non-empty matrix");
    }
    if (l.bias.size() != l.weight.cols()) {
      throw std::invalid_argument("layer " + std::to_string(k + 1) +
                                  ": bias size does not match fan_out");
    }
    if (k > 0 && layers_[k - 1].weight.cols() != l.weight.rows()) {
      throw std::invalid_argument(
          "layer " + std::to_string(k + 1) + ": fan_in " +
          std::to_string(l.weight.rows()) + " does not match previous fan_out " +
          std::to_string(layers_[k - 1].weight.cols()));
    }
  }
}

LayeredNet LayeredNet::Init(std::span<const std::size_t> dims,
                            std::uint64_t seed,
                            std::span<const Activation> activations) {
  if (dims.size() < 2) {
    throw std::invalid_argument("init: need at least input and output dims");
  }
  for (std::size_t d : dims) {
    if (d == 0) throw std::invalid_argument("init: zero-dimension layer");
  }
  const std::size_t n_layers = dims.size() - 1;
  if (!activations.empty() && activations.size() != n_layers) {
    throw std::invalid_argument("init: one activation per layer required");
  }
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t k = 0; k < n_layers; ++k) {
    const std::size_t fan_in = dims[k], fan_out = dims[k + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseLayer layer;
    layer.weight = Tensor(Shape{fan_in, fan_out});
    for (double& w : layer.weight.data()) w = u(rng);
    layer.bias = Tensor(Shape{1, fan_out});
    layer.activation = !activations.empty()   ? activations[k]
                       : k + 1 == n_layers ? Activation::kIdentity
                                           : Activation::kRelu;
    layers.push_back(std::move(layer));
  }
  return LayeredNet(std::move(layers));
}

std::size_t LayeredNet::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().weight.rows();
}

std::size_t LayeredNet::output_dim() const {
  return layers_.empty() ? 0 : layers_.back().weight.cols();
}

std::string TapName(std::size_t index) {
  return index == 0 ? std::string(kInputTap)
                    : "dense" + std::to_string(index);
}

std::vector<std::string> LayeredNet::TapNames() const {
  std::vector<std::string> names;
  for (std::size_t k = 0; k <= layers_.size(); ++k) names.push_back(TapName(k));
  return names;
}

std::string LayeredNet::LastTap() const { return TapName(layers_.size()); }

bool LayeredNet::HasTap(std::string_view name) const {
  for (std::size_t k = 0; k <= layers_.size(); ++k) {
    if (TapName(k) == name) return true;
  }
  return false;
}

std::size_t LayeredNet::TapIndex(std::string_view name) const {
  for (std::size_t k = 0; k <= layers_.size(); ++k) {
    if (TapName(k) == name) return k;
  }
  throw std::invalid_argument("unknown tap '" + std::string(name) + "'");
}

std::size_t LayeredNet::TapDim(std::string_view name) const {
  const std::size_t k = TapIndex(name);
  return k == 0 ? input_dim() : layers_[k - 1].weight.cols();
}

Tensor LayeredNet::Embed(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != input_dim()) {
    throw std::invalid_argument("embed: input has shape " +
                                ShapeString(x.shape()) + ", expected n x " +
                                std::to_string(input_dim()));
  }
  Tensor h = x;
  for (const DenseLayer& l : layers_) {
    const std::size_t n = h.rows(), in = l.weight.rows(), out = l.weight.cols();
    Tensor next(Shape{n, out});
    for (std::size_t i = 0; i < n; ++i) {
      double* dst = next.data().data() + i * out;
      for (std::size_t j = 0; j < out; ++j) dst[j] = l.bias[j];
      const double* src = h.data().data() + i * in;
      for (std::size_t p = 0; p < in; ++p) {
        const double v = src[p];
        if (v == 0.0) continue;
        const double* w = l.weight.data().data() + p * out;
        for (std::size_t j = 0; j < out; ++j) dst[j] += v * w[j];
      }
      if (l.activation == Activation::kRelu) {
        for (std::size_t j = 0; j < out; ++j) dst[j] = dst[j] > 0.0 ? dst[j] : 0.0;
      }
    }
    h = std::move(next);
  }
  return h;
}

std::vector<ad::Var> BoundNet::Params() const {
  std::vector<ad::Var> p;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    p.push_back(weights[k]);
    p.push_back(biases[k]);
  }
  return p;
}

BoundNet Bind(ad::Tape& tape, const LayeredNet& net) {
  BoundNet b;
  b.net = &net;
  for (const DenseLayer& l : net.layers()) {
    b.weights.push_back(tape.Leaf(l.weight));
    b.biases.push_back(tape.Leaf(l.bias));
  }
  return b;
}

namespace {

ad::Var ApplyLayer(const BoundNet& bound, std::size_t k, const ad::Var& h) {
  ad::Var pre = ad::Affine(h, bound.weights[k], bound.biases[k]);
  return bound.net->layers()[k].activation == Activation::kRelu ? ad::Relu(pre)
                                                                : pre;
}

void CheckInput(const BoundNet& bound, std::size_t layer, const ad::Var& h) {
  const Tensor& v = h.value();
  const std::size_t want = bound.net->layers()[layer].weight.rows();
  if (v.rank() != 2 || v.cols() != want) {
    throw std::invalid_argument("forward: layer " + std::to_string(layer + 1) +
                                " expects " + std::to_string(want) +
                                " columns, got shape " + ShapeString(v.shape()));
  }
}

}  // namespace

ForwardResult ForwardWithTaps(const BoundNet& bound, const ad::Var& x) {
  ForwardResult r;
  ad::Var h = x;
  r.taps.emplace(std::string(kInputTap), h);
  for (std::size_t k = 0; k < bound.weights.size(); ++k) {
    CheckInput(bound, k, h);
    h = ApplyLayer(bound, k, h);
    r.taps.emplace(TapName(k + 1), h);
  }
  r.z = h;
  return r;
}

ad::Var ForwardFromTap(const BoundNet& bound, std::string_view tap,
                       const ad::Var& q) {
  const std::size_t start = bound.net->TapIndex(tap);
  const std::size_t dim = bound.net->TapDim(tap);
  if (q.value().rank() != 2 || q.value().cols() != dim) {
    throw std::invalid_argument("forward from tap '" + std::string(tap) +
                                "': expected n x " + std::to_string(dim) +
                                ", got " + ShapeString(q.value().shape()));
  }
  ad::Var h = q;
  for (std::size_t k = start; k < bound.weights.size(); ++k) {
    h = ApplyLayer(bound, k, h);
  }
  return h;
}

TapSet DefaultTapSet(const LayeredNet& net) {
  return TapSet{{std::string(kInputTap), net.LastTap()}};
}

TapSet AllButFinalTapSet(const LayeredNet& net) {
  TapSet s;
  for (std::size_t k = 0; k < net.num_layers(); ++k) s.names.push_back(TapName(k));
  return s;
}

void ValidateTapSet(const LayeredNet& net, const TapSet& taps) {
  if (taps.names.empty()) throw std::invalid_argument("tap set is empty");
  for (const std::string& t : taps.names) {
    if (!net.HasTap(t)) {
      throw std::invalid_argument("tap set: unknown tap '" + t + "'");
    }
  }
}

}  // namespace debias::net
