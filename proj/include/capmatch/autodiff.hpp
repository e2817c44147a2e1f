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
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capmatch/tensor.hpp"

namespace capmatch::ad {

template <typename T>
class Tape;

// Handle to a value recorded on a tape. Cheap to copy; valid as long as the
// tape that produced it.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const;
  Tape<T>* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
using GradMap = std::map<std::string, Tensor<T>>;

// Reverse-mode gradient tape. Nodes are appended in evaluation order, so the
// node index is a topological order and backward() walks it in reverse.
//
// A tape built with record=false keeps values only; it is the inference mode
// used by evaluation.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad)>;

  explicit Tape(bool record = true);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  Var<T> constant(Tensor<T> value);
  // Registers a named leaf whose gradient backward() reports.
  Var<T> parameter(const std::string& name, Tensor<T> value);

  // Appends an op result. The closure runs during backward() only when one
  // of the parents depends on a parameter.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents,
                BackwardFn backward);
  Var<T> record(Tensor<T> value, std::span<const Var<T>> parents,
                BackwardFn backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool needs_grad(const Var<T>& v) const { return nodes_.at(v.id()).requires_grad; }
  void accumulate(const Var<T>& v, const Tensor<T>& grad);

  // Gradient of a scalar loss with respect to every registered parameter.
  // Parameters the loss does not depend on get exact zeros.
  GradMap<T> backward(const Var<T>& loss);

  void reset();
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    bool requires_grad = false;
    BackwardFn backward;
  };

  bool record_;
  bool consumed_ = false;
  std::deque<Node> nodes_;
  std::vector<std::optional<Tensor<T>>> grads_;
  std::map<std::string, std::size_t> params_;
};

// Differentiable ops. All operate on rank-2 values.
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
template <typename T> Var<T> matmul_nt(Var<T> a, Var<T> b);
template <typename T> Var<T> transpose(Var<T> a);
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T factor);
// a / s for a 1 x 1 variable s.
template <typename T> Var<T> div_scalar(Var<T> a, Var<T> s);
template <typename T> Var<T> add_rowvec(Var<T> a, Var<T> v);
template <typename T> Var<T> repeat_rows(Var<T> v, std::size_t n);
template <typename T> Var<T> mean_rows(Var<T> a);
template <typename T> Var<T> mean_all(Var<T> a);
template <typename T> Var<T> sum_all(Var<T> a);
template <typename T> Var<T> row_max(Var<T> a);
template <typename T> Var<T> softmax_rows(Var<T> a);
template <typename T> Var<T> log_softmax_rows(Var<T> a);
template <typename T> Var<T> gelu(Var<T> a);
template <typename T> Var<T> l2_normalize_rows(Var<T> a);
template <typename T> Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias);
template <typename T> Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t count);
template <typename T> Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t count);
template <typename T> Var<T> concat_rows(std::span<const Var<T>> parts);
template <typename T> Var<T> concat_cols(std::span<const Var<T>> parts);
template <typename T> Var<T> diag(Var<T> a);
// Builds a rows x cols matrix from 1 x 1 variables given in row-major order.
template <typename T>
Var<T> assemble(std::span<const Var<T>> scalars, std::size_t rows, std::size_t cols);

// x * W + b with W of shape in x out and b of extent out.
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  return add_rowvec(matmul(x, weight), bias);
}

}  // namespace capmatch::ad
