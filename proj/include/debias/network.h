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

// Dense feature extractor with named tap points.
//
// Tap "input" is the network input; tap "denseK" (1-based) is the output of
// layer K after its activation. The last tap is the embedding z.

#ifndef DEBIAS_NETWORK_H_
#define DEBIAS_NETWORK_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "debias/autodiff.h"
#include "debias/tensor.h"

namespace debias::net {

enum class Activation : std::uint8_t { kIdentity = 0, kRelu = 1 };

struct DenseLayer {
  Tensor weight;  // fan_in x fan_out
  Tensor bias;    // 1 x fan_out
  Activation activation = Activation::kRelu;
};

inline constexpr std::string_view kInputTap = "input";

class LayeredNet {
 public:
  LayeredNet() = default;
  explicit LayeredNet(std::vector<DenseLayer> layers);

  // dims = {input, hidden..., embedding}. Hidden layers use relu, the last
  // layer is identity unless `activations` says otherwise. Weights are drawn
  // from U(-b, b), b = sqrt(6 / (fan_in + fan_out)); biases start at zero.
  static LayeredNet Init(std::span<const std::size_t> dims, std::uint64_t seed,
                         std::span<const Activation> activations = {});

  std::size_t num_layers() const { return layers_.size(); }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  std::vector<std::string> TapNames() const;
  std::string LastTap() const;
  bool HasTap(std::string_view name) const;
  // 0 for "input", K for "denseK". Throws on unknown names.
  std::size_t TapIndex(std::string_view name) const;
  std::size_t TapDim(std::string_view name) const;

  // Plain forward pass without a tape.
  Tensor Embed(const Tensor& x) const;

 private:
  std::vector<DenseLayer> layers_;
};

std::string TapName(std::size_t index);

// Parameters of a net recorded as leaves on one tape.
struct BoundNet {
  const LayeredNet* net = nullptr;
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;

  std::vector<ad::Var> Params() const;
};

BoundNet Bind(ad::Tape& tape, const LayeredNet& net);

using TapActivations = std::map<std::string, ad::Var, std::less<>>;

struct ForwardResult {
  ad::Var z;
  TapActivations taps;
};

ForwardResult ForwardWithTaps(const BoundNet& bound, const ad::Var& x);

// Runs the layers strictly after `tap` on `q`. For "input" this is the whole
// network; for the last tap it returns `q` itself.
ad::Var ForwardFromTap(const BoundNet& bound, std::string_view tap,
                       const ad::Var& q);

// Taps the augmentation may perturb.
struct TapSet {
  std::vector<std::string> names;
};

// {"input", last layer}.
TapSet DefaultTapSet(const LayeredNet& net);
// Every tap except the final one.
TapSet AllButFinalTapSet(const LayeredNet& net);
// Checks non-emptiness and that each member exists.
void ValidateTapSet(const LayeredNet& net, const TapSet& taps);

}  // namespace debias::net

#endif  // DEBIAS_NETWORK_H_
