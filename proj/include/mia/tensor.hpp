// Copyright 2026 The mia-transfer Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mia/common.hpp"

namespace mia {

// Dense row-major tensor of doubles. Rank is arbitrary but almost every
// tensor in this library is a matrix of shape (rows, cols).
class Tensor {
 public:
  Tensor() : shape_{0} {}

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(Count(shape_), 0.0) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != Count(shape_)) {
      throw ShapeError("Tensor: data length " + std::to_string(data_.size()) +
                       " does not match shape product " +
                       std::to_string(Count(shape_)));
    }
  }

  static Tensor Matrix(std::size_t rows, std::size_t cols) {
    return Tensor({rows, cols});
  }

  // Builds a (rows.size(), d) matrix from equal-length rows.
  static Tensor FromRows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Tensor({0, 0});
    Tensor t = Matrix(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != t.cols()) {
        throw ShapeError("Tensor::FromRows: ragged row " + std::to_string(r));
      }
      std::copy(rows[r].begin(), rows[r].end(), t.Row(r).begin());
    }
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const {
    if (shape_.size() < 2) return 1;
    return std::accumulate(shape_.begin() + 1, shape_.end(), std::size_t{1},
                           std::multiplies<>());
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> Row(std::size_t r) {
    return {data_.data() + r * cols(), cols()};
  }
  std::span<const double> Row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  bool AllFinite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static std::size_t Count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Row-wise softmax with max subtraction.
inline Tensor Softmax(const Tensor& logits) {
  Tensor out = logits;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.Row(r);
    double m = -std::numeric_limits<double>::infinity();
    for (double v : row) m = std::max(m, v);
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - m);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
  return out;
}

// Index of the largest entry; ties resolve to the lowest index.
inline std::size_t Argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

}  // namespace mia
