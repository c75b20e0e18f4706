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

#include "debias/autodiff.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace debias::ad {
namespace {

constexpr double kLogFloor = 1e-12;

[[noreturn]] void Fail(OpKind kind, const std::string& what) {
  throw AutodiffError(std::string(OpName(kind)) + ": " + what);
}

[[noreturn]] void ShapeFail(OpKind kind, const Shape& a, const Shape& b) {
  Fail(kind, "shape mismatch " + ShapeString(a) + " vs " + ShapeString(b));
}

void RequireRank2(OpKind kind, const Tensor& t) {
  if (t.rank() != 2) Fail(kind, "expects a matrix, got " + ShapeString(t.shape()));
}

// C (r x c) += A (r x k) * B (k x c)
void GemmAccumulate(const double* a, const double* b, double* c, std::size_t r,
                    std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// dA (r x k) += dC (r x n) * B^T, with B (k x n)
void GemmAccumulateBt(const double* dc, const double* b, double* da,
                      std::size_t r, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* dci = dc + i * n;
    double* dai = da + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += dci[j] * bp[j];
      dai[p] += s;
    }
  }
}

// dB (k x n) += A^T * dC, with A (r x k), dC (r x n)
void GemmAccumulateAt(const double* a, const double* dc, double* db,
                      std::size_t r, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* ai = a + i * k;
    const double* dci = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* dbp = db + p * n;
      for (std::size_t j = 0; j < n; ++j) dbp[j] += av * dci[j];
    }
  }
}

double StableSigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool IsScalarOperand(const Tensor& t) { return t.rank() == 0; }

Shape BroadcastShape(OpKind kind, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return a.shape();
  if (IsScalarOperand(a)) return b.shape();
  if (IsScalarOperand(b)) return a.shape();
  ShapeFail(kind, a.shape(), b.shape());
}

// Element i of `t` under scalar broadcast.
inline double Bcast(const Tensor& t, std::size_t i) {
  return t.size() == 1 ? t[0] : t[i];
}

}  // namespace

const char* OpName(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConstant: return "constant";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAffine: return "affine";
    case OpKind::kAdd: return "add";
    case OpKind::kSubtract: return "subtract";
    case OpKind::kMultiply: return "multiply";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLog: return "log";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSquaredNorm: return "squared-l2-norm";
    case OpKind::kHinge: return "hinge";
    case OpKind::kScale: return "scale";
    case OpKind::kConcat: return "concat";
    case OpKind::kRowSelect: return "row-select";
    case OpKind::kGradReverse: return "grad-reverse";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw AutodiffError("var: not bound to a tape");
  return tape_->value(*this);
}

Var Tape::Push(Node node) {
  if (!node.value.AllFinite()) {
    Fail(node.kind, "non-finite value in result of shape " +
                        ShapeString(node.value.shape()));
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::Leaf(Tensor value) {
  if (!value.AllFinite()) Fail(OpKind::kLeaf, "non-finite operand");
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  n.requires_grad = true;
  return Push(std::move(n));
}

Var Tape::Constant(Tensor value) {
  if (!value.AllFinite()) Fail(OpKind::kConstant, "non-finite operand");
  Node n;
  n.kind = OpKind::kConstant;
  n.value = std::move(value);
  return Push(std::move(n));
}

Var Tape::Detach(const Var& v) {
  CheckOwned(v, "detach");
  return Leaf(nodes_[v.id()].value);
}

void Tape::CheckOwned(const Var& v, const char* what) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw AutodiffError(std::string(what) + ": variable is not on this tape");
  }
}

const Tensor& Tape::value(const Var& v) const {
  CheckOwned(v, "value");
  return nodes_[v.id()].value;
}

OpKind Tape::kind(const Var& v) const {
  CheckOwned(v, "kind");
  return nodes_[v.id()].kind;
}

Var Tape::Record(OpKind kind, std::span<const Var> operands, double factor,
                 std::size_t axis, std::vector<std::size_t> rows) {
  std::size_t arity = 1;
  switch (kind) {
    case OpKind::kLeaf:
    case OpKind::kConstant:
      Fail(kind, "use Leaf() or Constant()");
    case OpKind::kMatmul:
    case OpKind::kAdd:
    case OpKind::kSubtract:
    case OpKind::kMultiply:
    case OpKind::kConcat:
      arity = 2;
      break;
    case OpKind::kAffine:
      arity = 3;
      break;
    default:
      break;
  }
  if (operands.size() != arity) {
    Fail(kind, "expects " + std::to_string(arity) + " operands, got " +
                   std::to_string(operands.size()));
  }
  for (const Var& v : operands) CheckOwned(v, OpName(kind));

  Node node;
  node.kind = kind;
  node.factor = factor;
  node.axis = axis;
  for (std::size_t i = 0; i < arity; ++i) {
    node.in[i] = static_cast<std::int64_t>(operands[i].id());
    node.requires_grad =
        node.requires_grad || nodes_[operands[i].id()].requires_grad;
  }
  const Tensor& a = nodes_[operands[0].id()].value;
  const Tensor* b = arity > 1 ? &nodes_[operands[1].id()].value : nullptr;

  switch (kind) {
    case OpKind::kMatmul: {
      RequireRank2(kind, a);
      RequireRank2(kind, *b);
      if (a.cols() != b->rows()) ShapeFail(kind, a.shape(), b->shape());
      node.value = Tensor(Shape{a.rows(), b->cols()});
      GemmAccumulate(a.data().data(), b->data().data(),
                     node.value.data().data(), a.rows(), a.cols(), b->cols());
      break;
    }
    case OpKind::kAffine: {
      const Tensor& bias = nodes_[operands[2].id()].value;
      RequireRank2(kind, a);
      RequireRank2(kind, *b);
      if (a.cols() != b->rows()) ShapeFail(kind, a.shape(), b->shape());
      if (bias.size() != b->cols() || bias.rank() > 2 || bias.rows() != 1) {
        ShapeFail(kind, b->shape(), bias.shape());
      }
      const std::size_t n = a.rows(), out = b->cols();
      node.value = Tensor(Shape{n, out});
      double* z = node.value.data().data();
      for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(bias.data().data(), out, z + i * out);
      }
      GemmAccumulate(a.data().data(), b->data().data(), z, n, a.cols(), out);
      break;
    }
    case OpKind::kAdd:
    case OpKind::kSubtract:
    case OpKind::kMultiply: {
      node.value = Tensor(BroadcastShape(kind, a, *b));
      for (std::size_t i = 0; i < node.value.size(); ++i) {
        const double x = Bcast(a, i), y = Bcast(*b, i);
        node.value[i] = kind == OpKind::kAdd        ? x + y
                        : kind == OpKind::kSubtract ? x - y
                                                    : x * y;
      }
      break;
    }
    case OpKind::kRelu:
      node.value = a;
      for (double& v : node.value.data()) v = v > 0.0 ? v : 0.0;
      break;
    case OpKind::kSigmoid:
      node.value = a;
      for (double& v : node.value.data()) v = StableSigmoid(v);
      break;
    case OpKind::kSoftmax: {
      if (a.rank() == 0 || a.rank() > 2) {
        Fail(kind, "expects rank 1 or 2, got " + ShapeString(a.shape()));
      }
      node.value = a;
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto row = node.value.row(r);
        const double m = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double& v : row) {
          v = std::exp(v - m);
          s += v;
        }
        for (double& v : row) v /= s;
      }
      break;
    }
    case OpKind::kLog:
      node.value = a;
      for (double& v : node.value.data()) v = std::log(std::max(v, kLogFloor));
      break;
    case OpKind::kSum:
    case OpKind::kMean: {
      double s = 0.0;
      for (double v : a.data()) s += v;
      if (kind == OpKind::kMean) s /= static_cast<double>(a.size());
      node.value = Tensor::Scalar(s);
      break;
    }
    case OpKind::kSquaredNorm: {
      double s = 0.0;
      for (double v : a.data()) s += v * v;
      node.value = Tensor::Scalar(s);
      break;
    }
    case OpKind::kHinge:
      node.value = a;
      for (double& v : node.value.data()) v = std::max(1.0 - v, 0.0);
      break;
    case OpKind::kScale:
    case OpKind::kGradReverse:
      node.value = a;
      if (kind == OpKind::kScale) {
        for (double& v : node.value.data()) v *= factor;
      }
      break;
    case OpKind::kConcat: {
      RequireRank2(kind, a);
      RequireRank2(kind, *b);
      if (axis == 0) {
        if (a.cols() != b->cols()) ShapeFail(kind, a.shape(), b->shape());
        std::vector<double> v(a.data().begin(), a.data().end());
        v.insert(v.end(), b->data().begin(), b->data().end());
        node.value = Tensor::Matrix(a.rows() + b->rows(), a.cols(), std::move(v));
      } else if (axis == 1) {
        if (a.rows() != b->rows()) ShapeFail(kind, a.shape(), b->shape());
        const std::size_t c = a.cols() + b->cols();
        node.value = Tensor(Shape{a.rows(), c});
        for (std::size_t r = 0; r < a.rows(); ++r) {
          auto dst = node.value.row(r);
          std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
          std::copy(b->row(r).begin(), b->row(r).end(),
                    dst.begin() + static_cast<std::ptrdiff_t>(a.cols()));
        }
      } else {
        Fail(kind, "axis must be 0 or 1");
      }
      break;
    }
    case OpKind::kRowSelect: {
      RequireRank2(kind, a);
      for (std::size_t r : rows) {
        if (r >= a.rows()) {
          Fail(kind, "row " + std::to_string(r) + " out of range for " +
                         ShapeString(a.shape()));
        }
      }
      node.value = SelectRows(a, rows);
      node.rows = std::move(rows);
      break;
    }
    default:
      Fail(kind, "unsupported op");
  }
  return Push(std::move(node));
}

void Tape::Propagate(const Node& node, const Tensor& adj,
                     std::vector<Tensor>& adjoints) const {
  auto target = [&](int slot) -> Tensor* {
    const std::int64_t id = node.in[slot];
    if (id < 0 || !nodes_[id].requires_grad) return nullptr;
    Tensor& t = adjoints[id];
    if (t.shape() != nodes_[id].value.shape() || t.size() != nodes_[id].value.size()) {
      t = Tensor::ZerosLike(nodes_[id].value);
    }
    return &t;
  };
  auto in_value = [&](int slot) -> const Tensor& {
    return nodes_[node.in[slot]].value;
  };

  switch (node.kind) {
    case OpKind::kLeaf:
    case OpKind::kConstant:
      return;
    case OpKind::kMatmul:
    case OpKind::kAffine: {
      const Tensor& a = in_value(0);
      const Tensor& b = in_value(1);
      const std::size_t r = a.rows(), k = a.cols(), n = b.cols();
      if (Tensor* da = target(0)) {
        GemmAccumulateBt(adj.data().data(), b.data().data(), da->data().data(),
                         r, k, n);
      }
      if (Tensor* db = target(1)) {
        GemmAccumulateAt(a.data().data(), adj.data().data(), db->data().data(),
                         r, k, n);
      }
      if (node.kind == OpKind::kAffine) {
        if (Tensor* dbias = target(2)) {
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < n; ++j) (*dbias)[j] += adj.at(i, j);
          }
        }
      }
      return;
    }
    case OpKind::kAdd:
    case OpKind::kSubtract:
    case OpKind::kMultiply: {
      const Tensor& a = in_value(0);
      const Tensor& b = in_value(1);
      for (int slot = 0; slot < 2; ++slot) {
        Tensor* d = target(slot);
        if (d == nullptr) continue;
        const bool reduce = d->size() == 1 && adj.size() != 1;
        const Tensor& other = slot == 0 ? b : a;
        double acc = 0.0;
        for (std::size_t i = 0; i < adj.size(); ++i) {
          double g = adj[i];
          if (node.kind == OpKind::kSubtract && slot == 1) g = -g;
          if (node.kind == OpKind::kMultiply) g *= Bcast(other, i);
          if (reduce) {
            acc += g;
          } else {
            (*d)[i] += g;
          }
        }
        if (reduce) (*d)[0] += acc;
      }
      return;
    }
    case OpKind::kRelu: {
      if (Tensor* d = target(0)) {
        const Tensor& x = in_value(0);
        for (std::size_t i = 0; i < adj.size(); ++i) {
          if (x[i] > 0.0) (*d)[i] += adj[i];
        }
      }
      return;
    }
    case OpKind::kSigmoid: {
      if (Tensor* d = target(0)) {
        const Tensor& y = node.value;
        for (std::size_t i = 0; i < adj.size(); ++i) {
          (*d)[i] += adj[i] * y[i] * (1.0 - y[i]);
        }
      }
      return;
    }
    case OpKind::kSoftmax: {
      if (Tensor* d = target(0)) {
        const Tensor& y = node.value;
        const std::size_t c = y.cols();
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += adj[r * c + j] * y[r * c + j];
          for (std::size_t j = 0; j < c; ++j) {
            (*d)[r * c + j] += y[r * c + j] * (adj[r * c + j] - dot);
          }
        }
      }
      return;
    }
    case OpKind::kLog: {
      if (Tensor* d = target(0)) {
        const Tensor& x = in_value(0);
        for (std::size_t i = 0; i < adj.size(); ++i) {
          if (x[i] >= kLogFloor) (*d)[i] += adj[i] / x[i];
        }
      }
      return;
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      if (Tensor* d = target(0)) {
        double g = adj[0];
        if (node.kind == OpKind::kMean) g /= static_cast<double>(d->size());
        for (double& v : d->data()) v += g;
      }
      return;
    }
    case OpKind::kSquaredNorm: {
      if (Tensor* d = target(0)) {
        const Tensor& x = in_value(0);
        const double g = 2.0 * adj[0];
        for (std::size_t i = 0; i < x.size(); ++i) (*d)[i] += g * x[i];
      }
      return;
    }
    case OpKind::kHinge: {
      // Subgradient 0 at the kink t == 1.
      if (Tensor* d = target(0)) {
        const Tensor& t = in_value(0);
        for (std::size_t i = 0; i < adj.size(); ++i) {
          if (1.0 - t[i] > 0.0) (*d)[i] -= adj[i];
        }
      }
      return;
    }
    case OpKind::kScale:
    case OpKind::kGradReverse: {
      if (Tensor* d = target(0)) {
        const double f = node.kind == OpKind::kScale ? node.factor : -node.factor;
        for (std::size_t i = 0; i < adj.size(); ++i) (*d)[i] += f * adj[i];
      }
      return;
    }
    case OpKind::kConcat: {
      const Tensor& a = in_value(0);
      Tensor* da = target(0);
      Tensor* db = target(1);
      if (node.axis == 0) {
        const std::size_t split = a.size();
        if (da) for (std::size_t i = 0; i < split; ++i) (*da)[i] += adj[i];
        if (db) {
          for (std::size_t i = split; i < adj.size(); ++i) (*db)[i - split] += adj[i];
        }
      } else {
        const std::size_t ca = a.cols(), c = node.value.cols(), cb = c - ca;
        for (std::size_t r = 0; r < node.value.rows(); ++r) {
          if (da) for (std::size_t j = 0; j < ca; ++j) (*da)[r * ca + j] += adj[r * c + j];
          if (db) for (std::size_t j = 0; j < cb; ++j) (*db)[r * cb + j] += adj[r * c + ca + j];
        }
      }
      return;
    }
    case OpKind::kRowSelect: {
      if (Tensor* d = target(0)) {
        const std::size_t c = node.value.cols();
        for (std::size_t i = 0; i < node.rows.size(); ++i) {
          const std::size_t src = node.rows[i];
          for (std::size_t j = 0; j < c; ++j) (*d)[src * c + j] += adj[i * c + j];
        }
      }
      return;
    }
  }
}

std::vector<Tensor> Tape::Sweep(std::size_t output, const Tensor& seed,
                                std::size_t floor) const {
  // Slots hold an empty tensor until some consumer writes to them.
  std::vector<Tensor> adjoints(output + 1, Tensor(Shape{0}));
  adjoints[output] = seed;
  for (std::size_t k = output + 1; k-- > floor;) {
    const Node& node = nodes_[k];
    if (adjoints[k].size() == 0 || !node.requires_grad) continue;
    Propagate(node, adjoints[k], adjoints);
  }
  return adjoints;
}

void Tape::Backward(const Var& output) {
  CheckOwned(output, "backward");
  const Node& out = nodes_[output.id()];
  if (out.value.size() != 1) {
    throw AutodiffError("backward: output must be scalar, got shape " +
                        ShapeString(out.value.shape()));
  }
  adjoints_ = Sweep(output.id(), Tensor::Filled(out.value.shape(), 1.0), 0);
}

Tensor Tape::Adjoint(const Var& v) const {
  CheckOwned(v, "adjoint");
  if (v.id() < adjoints_.size() && adjoints_[v.id()].size() != 0) {
    return adjoints_[v.id()];
  }
  return Tensor::ZerosLike(nodes_[v.id()].value);
}

std::vector<Tensor> Tape::Gradients(const Var& output,
                                    std::span<const Var> wrt) const {
  CheckOwned(output, "gradients");
  const Node& out = nodes_[output.id()];
  if (out.value.size() != 1) {
    throw AutodiffError("gradients: output must be scalar, got shape " +
                        ShapeString(out.value.shape()));
  }
  std::size_t floor = output.id();
  for (const Var& w : wrt) {
    CheckOwned(w, "gradients");
    floor = std::min(floor, w.id());
  }
  std::vector<Tensor> adj =
      Sweep(output.id(), Tensor::Filled(out.value.shape(), 1.0), floor);
  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (w.id() <= output.id() && adj[w.id()].size() != 0) {
      result.push_back(adj[w.id()]);
    } else {
      result.push_back(Tensor::ZerosLike(nodes_[w.id()].value));
    }
  }
  return result;
}

Tensor Tape::Gradient(const Var& output, const Var& wrt) const {
  return Gradients(output, std::span<const Var>(&wrt, 1)).front();
}

ActivationGradient Tape::Vjp(const Var& output, const Tensor& seed,
                             const Var& wrt) const {
  CheckOwned(output, "vjp");
  CheckOwned(wrt, "vjp");
  const Node& out = nodes_[output.id()];
  if (seed.shape() != out.value.shape()) {
    throw AutodiffError("vjp: seed shape " + ShapeString(seed.shape()) +
                        " does not match output " +
                        ShapeString(out.value.shape()));
  }
  ActivationGradient g;
  if (wrt.id() > output.id()) {
    g.grad = Tensor::ZerosLike(nodes_[wrt.id()].value);
    return g;
  }
  std::vector<Tensor> adj = Sweep(output.id(), seed, wrt.id());
  if (adj[wrt.id()].size() != 0) {
    g.grad = std::move(adj[wrt.id()]);
    g.reachable = true;
  } else {
    g.grad = Tensor::ZerosLike(nodes_[wrt.id()].value);
  }
  return g;
}

ActivationGradient Tape::GradWrtActivation(const Var& output,
                                           const Var& activation) const {
  CheckOwned(output, "grad wrt activation");
  const Node& out = nodes_[output.id()];
  if (out.value.size() != 1) {
    throw AutodiffError("grad wrt activation: output must be scalar, got " +
                        ShapeString(out.value.shape()));
  }
  return Vjp(output, Tensor::Filled(out.value.shape(), 1.0), activation);
}

Var Matmul(const Var& a, const Var& b) {
  const Var ops[] = {a, b};
  return a.tape()->Record(OpKind::kMatmul, ops);
}

Var Affine(const Var& x, const Var& w, const Var& b) {
  const Var ops[] = {x, w, b};
  return x.tape()->Record(OpKind::kAffine, ops);
}

Var Add(const Var& a, const Var& b) {
  const Var ops[] = {a, b};
  return a.tape()->Record(OpKind::kAdd, ops);
}

Var Subtract(const Var& a, const Var& b) {
  const Var ops[] = {a, b};
  return a.tape()->Record(OpKind::kSubtract, ops);
}

Var Multiply(const Var& a, const Var& b) {
  const Var ops[] = {a, b};
  return a.tape()->Record(OpKind::kMultiply, ops);
}

namespace {
Var Unary(OpKind kind, const Var& x, double factor = 0.0) {
  if (!x.valid()) throw AutodiffError(std::string(OpName(kind)) + ": unbound operand");
  return x.tape()->Record(kind, std::span<const Var>(&x, 1), factor);
}
}  // namespace

Var Relu(const Var& x) { return Unary(OpKind::kRelu, x); }
Var Sigmoid(const Var& x) { return Unary(OpKind::kSigmoid, x); }
Var Softmax(const Var& x) { return Unary(OpKind::kSoftmax, x); }
Var Log(const Var& x) { return Unary(OpKind::kLog, x); }
Var Sum(const Var& x) { return Unary(OpKind::kSum, x); }
Var Mean(const Var& x) { return Unary(OpKind::kMean, x); }
Var SquaredNorm(const Var& x) { return Unary(OpKind::kSquaredNorm, x); }
Var Hinge(const Var& t) { return Unary(OpKind::kHinge, t); }
Var Scale(const Var& x, double factor) {
  return Unary(OpKind::kScale, x, factor);
}
Var GradReverse(const Var& x, double factor) {
  return Unary(OpKind::kGradReverse, x, factor);
}

Var Concat(const Var& a, const Var& b, std::size_t axis) {
  const Var ops[] = {a, b};
  return a.tape()->Record(OpKind::kConcat, ops, 0.0, axis);
}

Var RowSelect(const Var& x, std::vector<std::size_t> rows) {
  return x.tape()->Record(OpKind::kRowSelect, std::span<const Var>(&x, 1), 0.0,
                          0, std::move(rows));
}

Var AppendOnes(const Var& x) {
  const Tensor& v = x.value();
  Var ones = x.tape()->Constant(Tensor::Filled(Shape{v.rows(), 1}, 1.0));
  return Concat(x, ones, 1);
}

}  // namespace debias::ad
