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

// Define-by-run reverse-mode differentiation over dense tensors.
//
// A Tape records every primitive applied during one forward pass. Nodes are
// appended in evaluation order, so operands always precede their consumers
// and a single reverse sweep computes exact adjoints. Parameters and data
// enter as leaves; Detach() cuts the graph and produces a fresh leaf with the
// same value, which is how stop-gradient is expressed.
//
// Broadcasting is limited to scalar-vs-tensor for the elementwise binary ops.

#ifndef DEBIAS_AUTODIFF_H_
#define DEBIAS_AUTODIFF_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "debias/tensor.h"

namespace debias::ad {

enum class OpKind : std::uint8_t {
  kLeaf,
  kConstant,
  kMatmul,
  kAffine,  // X W + 1 b, b is a 1 x out row
  kAdd,
  kSubtract,
  kMultiply,
  kRelu,
  kSigmoid,
  kSoftmax,  // row-wise
  kLog,      // input clamped at 1e-12
  kSum,
  kMean,
  kSquaredNorm,
  kHinge,  // max(1 - t, 0)
  kScale,
  kConcat,
  kRowSelect,
  kGradReverse,  // identity forward, adjoint multiplied by -factor
};

const char* OpName(OpKind kind);

// Raised for any contract violation while recording or differentiating.
class AutodiffError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Tape;

// Lightweight handle to a node on a tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Gradient of a scalar with respect to an interior activation. `reachable`
// is false when the activation does not feed the output; the gradient is then
// all zeros.
struct ActivationGradient {
  Tensor grad;
  bool reachable = false;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable input (parameter or data we want a gradient for).
  Var Leaf(Tensor value);
  // Non-differentiable input.
  Var Constant(Tensor value);
  // Stop-gradient: a new leaf carrying the value of `v`. Gradients reaching
  // the returned node never flow into the ancestors of `v`.
  Var Detach(const Var& v);

  Var Record(OpKind kind, std::span<const Var> operands, double factor = 0.0,
             std::size_t axis = 0, std::vector<std::size_t> rows = {});

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(const Var& v) const;
  OpKind kind(const Var& v) const;

  // Reverse sweep from a scalar output. Resets and fills the stored adjoints.
  void Backward(const Var& output);
  // Adjoint of `v` from the most recent Backward(); zeros if untouched.
  Tensor Adjoint(const Var& v) const;

  // d(output)/d(wrt[k]) for a scalar output. Leaves stored adjoints alone.
  std::vector<Tensor> Gradients(const Var& output,
                                std::span<const Var> wrt) const;
  Tensor Gradient(const Var& output, const Var& wrt) const;

  ActivationGradient GradWrtActivation(const Var& output,
                                       const Var& activation) const;

  // Vector-Jacobian product: seed^T d(output)/d(wrt) for any output shape.
  ActivationGradient Vjp(const Var& output, const Tensor& seed,
                         const Var& wrt) const;

 private:
  struct Node {
    OpKind kind = OpKind::kConstant;
    Tensor value;
    std::array<std::int64_t, 3> in{-1, -1, -1};
    bool requires_grad = false;
    double factor = 0.0;
    std::size_t axis = 0;
    std::vector<std::size_t> rows;
  };

  void CheckOwned(const Var& v, const char* what) const;
  Var Push(Node node);
  // Sweeps adjoints from `output` (seeded with `seed`) down to node `floor`.
  std::vector<Tensor> Sweep(std::size_t output, const Tensor& seed,
                            std::size_t floor) const;
  void Propagate(const Node& node, const Tensor& adj,
                 std::vector<Tensor>& adjoints) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> adjoints_;
};

// Op catalog. Each records one node on the operands' tape.
Var Matmul(const Var& a, const Var& b);
Var Affine(const Var& x, const Var& w, const Var& b);
Var Add(const Var& a, const Var& b);
Var Subtract(const Var& a, const Var& b);
Var Multiply(const Var& a, const Var& b);
Var Relu(const Var& x);
Var Sigmoid(const Var& x);
Var Softmax(const Var& x);
Var Log(const Var& x);
Var Sum(const Var& x);
Var Mean(const Var& x);
Var SquaredNorm(const Var& x);
Var Hinge(const Var& t);
Var Scale(const Var& x, double factor);
Var Concat(const Var& a, const Var& b, std::size_t axis);
Var RowSelect(const Var& x, std::vector<std::size_t> rows);
Var GradReverse(const Var& x, double factor);

// Appends a constant column of ones: [X, 1].
Var AppendOnes(const Var& x);

inline Var operator+(const Var& a, const Var& b) { return Add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return Subtract(a, b); }
inline Var operator*(const Var& a, const Var& b) { return Multiply(a, b); }
inline Var operator*(double s, const Var& x) { return Scale(x, s); }

}  // namespace debias::ad

#endif  // DEBIAS_AUTODIFF_H_
