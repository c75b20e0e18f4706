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

#include "debias/tensor.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace debias {

std::string ShapeString(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t ShapeSize(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)), data_(ShapeSize(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (ShapeSize(shape_) != data_.size()) {
    throw std::invalid_argument("tensor: shape " + ShapeString(shape_) +
                                " does not match " +
                                std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::Scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::Vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::Matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

Tensor Tensor::Matrix(
    std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw std::invalid_argument("tensor: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(values));
}

Tensor Tensor::Filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

std::size_t Tensor::rows() const {
  switch (shape_.size()) {
    case 0:
    case 1:
      return 1;
    case 2:
      return shape_[0];
    default:
      throw std::logic_error("tensor: rows() on rank " +
                             std::to_string(shape_.size()));
  }
}

std::size_t Tensor::cols() const {
  switch (shape_.size()) {
    case 0:
      return 1;
    case 1:
      return shape_[0];
    case 2:
      return shape_[1];
    default:
      throw std::logic_error("tensor: cols() on rank " +
                             std::to_string(shape_.size()));
  }
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw std::logic_error("tensor: item() on shape " + ShapeString(shape_));
  }
  return data_[0];
}

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor Tensor::Reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

Tensor SelectRows(const Tensor& t, std::span<const std::size_t> indices) {
  const std::size_t c = t.cols();
  Tensor out(Shape{indices.size(), c});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= t.rows()) {
      throw std::out_of_range("select rows: index " +
                              std::to_string(indices[i]) + " >= " +
                              std::to_string(t.rows()));
    }
    std::copy_n(t.data().begin() + indices[i] * c, c,
                out.data().begin() + i * c);
  }
  return out;
}

double MaxAbsDiff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("max abs diff: size mismatch");
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

}  // namespace debias
