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

#ifndef DEBIAS_TENSOR_H_
#define DEBIAS_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace debias {

using Shape = std::vector<std::size_t>;

std::string ShapeString(const Shape& shape);
std::size_t ShapeSize(const Shape& shape);

// Dense row-major tensor of doubles. Rank 0 is a scalar, rank 1 a vector and
// rank 2 a matrix; higher ranks are representable but no op consumes them.
class Tensor {
 public:
  Tensor() : shape_{}, data_(1, 0.0) {}
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Scalar(double value);
  static Tensor Vector(std::vector<double> values);
  static Tensor Matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);
  static Tensor Matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor Filled(Shape shape, double value);
  static Tensor Zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ZerosLike(const Tensor& t) { return Tensor(t.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return data_.size() == 1 && shape_.empty(); }

  // Matrix view. A rank-1 tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
  }
  double item() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }
  std::span<double> row(std::size_t r) {
    return std::span<double>(data_).subspan(r * cols(), cols());
  }

  bool AllFinite() const;
  Tensor Reshaped(Shape shape) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Rows of `t` at `indices`, in order.
Tensor SelectRows(const Tensor& t, std::span<const std::size_t> indices);

double MaxAbsDiff(const Tensor& a, const Tensor& b);

}  // namespace debias

#endif  // DEBIAS_TENSOR_H_
