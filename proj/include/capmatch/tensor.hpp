/*
 * Copyright 2026 The capmatch Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "capmatch/error.hpp"

namespace capmatch {

// Dense row-major tensor. Every kernel in the engine works on rank-2 data; a
// rank-1 tensor of extent n is read as a 1 x n matrix. Zero extents are
// allowed so that a video without captions can hold a 0 x D caption block.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, T fill = T(0));
  Tensor(std::vector<std::size_t> shape, std::vector<T> data);

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<T> values);
  static Tensor zeros(std::size_t rows, std::size_t cols) {
    return Tensor({rows, cols});
  }
  static Tensor scalar(T value) { return Tensor({1, 1}, std::vector<T>{value}); }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols() + c];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> row(std::size_t r) {
    return std::span<T>(data_).subspan(r * cols(), cols());
  }
  std::span<const T> row(std::size_t r) const {
    return std::span<const T>(data_).subspan(r * cols(), cols());
  }

  // Scalar value of a 1 x 1 tensor.
  T item() const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool same_shape(const Tensor& other) const noexcept {
    return rows() == other.rows() && cols() == other.cols();
  }
  bool all_finite() const noexcept;

  // Equality of shape and of every element's bit pattern.
  bool bitwise_equal(const Tensor& other) const noexcept;

 private:
  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

template <typename T>
using Matrix = Tensor<T>;

// Row-wise L2 normalization. Fails with kZeroNormRow if a row has norm <= 1e-12.
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x);

// Numerically stable softmax over each row.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);

// Per-row layer normalization (1/D variance, epsilon 1e-5) followed by an affine
// map with gain and bias of extent D.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias);

namespace kernels {

inline constexpr double kNormEpsilon = 1e-12;
inline constexpr double kLayerNormEpsilon = 1e-5;

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// a * b^T
template <typename T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);
// a^T * b
template <typename T> Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& v);
template <typename T> Tensor<T> sum_rows(const Tensor<T>& a);
template <typename T> Tensor<T> mean_rows(const Tensor<T>& a);
template <typename T> Tensor<T> repeat_rows(const Tensor<T>& v, std::size_t n);
// Row-wise maximum (N x 1); argmax receives the first maximizing column.
template <typename T>
Tensor<T> row_max(const Tensor<T>& a, std::vector<std::size_t>* argmax = nullptr);
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& a);
template <typename T> Tensor<T> log_softmax_rows(const Tensor<T>& a);
template <typename T> Tensor<T> gelu(const Tensor<T>& a);
template <typename T> Tensor<T> gelu_derivative(const Tensor<T>& a);
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& a, std::vector<T>* norms = nullptr);
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, Tensor<T>* normalized = nullptr,
                     std::vector<T>* inv_std = nullptr);
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t count);
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t count);
template <typename T> Tensor<T> concat_rows(std::span<const Tensor<T>* const> parts);
template <typename T> Tensor<T> concat_cols(std::span<const Tensor<T>* const> parts);
template <typename T> Tensor<T> diag(const Tensor<T>& a);
template <typename T> T sum_all(const Tensor<T>& a);

}  // namespace kernels

}  // namespace capmatch
