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

#include "capmatch/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <string>

namespace capmatch {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    fail(ErrorCode::kDimensionMismatch,
         std::string(op) + ": shape " + shape_string(a.rows(), a.cols()) +
             " vs " + shape_string(b.rows(), b.cols()));
  }
}

}  // namespace

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kZeroNormRow: return "ZeroNormRow";
    case ErrorCode::kDetachedLoss: return "DetachedLoss";
    case ErrorCode::kDoubleBackward: return "DoubleBackward";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kInvariantViolation: return "InvariantViolation";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kSplitMisuse: return "SplitMisuse";
    case ErrorCode::kArchiveMismatch: return "ArchiveMismatch";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNoCaptions: return "NoCaptions";
    case ErrorCode::kSequenceTooLong: return "SequenceTooLong";
    case ErrorCode::kNonSquare: return "NonSquare";
    case ErrorCode::kNonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, std::string(error_code_name(code)) + ": " + message);
}

template <typename T>
Tensor<T>::Tensor(std::vector<std::size_t> shape, T fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(std::vector<std::size_t> shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_product(shape_)) {
    fail(ErrorCode::kShapeMismatch, "tensor data length " +
                                        std::to_string(data_.size()) +
                                        " does not match its shape");
  }
}

template <typename T>
Tensor<T> Tensor<T>::matrix(std::size_t rows, std::size_t cols,
                            std::initializer_list<T> values) {
  return Tensor({rows, cols}, std::vector<T>(values));
}

template <typename T>
std::size_t Tensor<T>::rows() const noexcept {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? 1 : shape_[0];
}

template <typename T>
std::size_t Tensor<T>::cols() const noexcept {
  return shape_.empty() ? 0 : shape_.back();
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) {
    fail(ErrorCode::kDimensionMismatch, "item() on a tensor of size " +
                                            std::to_string(data_.size()));
  }
  return data_[0];
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
bool Tensor<T>::bitwise_equal(const Tensor& other) const noexcept {
  return shape_ == other.shape_ &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(T)) == 0);
}

template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x) {
  return kernels::l2_normalize_rows(x);
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  return kernels::softmax_rows(x);
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias) {
  return kernels::layer_norm(x, gain, bias);
}

namespace kernels {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorCode::kDimensionMismatch,
         "matmul " + shape_string(a.rows(), a.cols()) + " * " +
             shape_string(b.rows(), b.cols()));
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor<T> out = Tensor<T>::zeros(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    T* o = out.data().data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a(i, p);
      const T* br = b.data().data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.cols()) {
    fail(ErrorCode::kDimensionMismatch,
         "matmul_nt " + shape_string(a.rows(), a.cols()) + " * (" +
             shape_string(b.rows(), b.cols()) + ")^T");
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  Tensor<T> out = Tensor<T>::zeros(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const T* ar = a.data().data() + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const T* br = b.data().data() + j * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
      out(i, j) = acc;
    }
  }
  return out;
}

template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rows() != b.rows()) {
    fail(ErrorCode::kDimensionMismatch,
         "matmul_tn (" + shape_string(a.rows(), a.cols()) + ")^T * " +
             shape_string(b.rows(), b.cols()));
  }
  const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
  Tensor<T> out = Tensor<T>::zeros(n, m);
  for (std::size_t p = 0; p < k; ++p) {
    const T* ar = a.data().data() + p * n;
    const T* br = b.data().data() + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const T av = ar[i];
      T* o = out.data().data() + i * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * factor;
  return out;
}

template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& v) {
  if (v.size() != a.cols()) {
    fail(ErrorCode::kDimensionMismatch,
         "add_rowvec: vector of extent " + std::to_string(v.size()) +
             " onto " + shape_string(a.rows(), a.cols()));
  }
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) + v[j];
  return out;
}

template <typename T>
Tensor<T> sum_rows(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += a(i, j);
  return out;
}

template <typename T>
Tensor<T> mean_rows(const Tensor<T>& a) {
  if (a.rows() == 0) fail(ErrorCode::kDimensionMismatch, "mean over zero rows");
  Tensor<T> out = sum_rows(a);
  const T inv = T(1) / static_cast<T>(a.rows());
  for (auto& v : out.data()) v *= inv;
  return out;
}

template <typename T>
Tensor<T> repeat_rows(const Tensor<T>& v, std::size_t n) {
  Tensor<T> out = Tensor<T>::zeros(n, v.size());
  for (std::size_t i = 0; i < n; ++i)
    std::copy(v.data().begin(), v.data().end(), out.row(i).begin());
  return out;
}

template <typename T>
Tensor<T> row_max(const Tensor<T>& a, std::vector<std::size_t>* argmax) {
  if (a.cols() == 0) fail(ErrorCode::kDimensionMismatch, "row_max over zero columns");
  Tensor<T> out = Tensor<T>::zeros(a.rows(), 1);
  if (argmax) argmax->assign(a.rows(), 0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < a.cols(); ++j)
      if (a(i, j) > a(i, best)) best = j;
    out[i] = a(i, best);
    if (argmax) (*argmax)[i] = best;
  }
  return out;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row(i);
    auto o = out.row(i);
    const T mx = *std::max_element(in.begin(), in.end());
    T total = 0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (auto& v : o) v /= total;
  }
  return out;
}

template <typename T>
Tensor<T> log_softmax_rows(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row(i);
    auto o = out.row(i);
    const T mx = *std::max_element(in.begin(), in.end());
    T total = 0;
    for (T v : in) total += std::exp(v - mx);
    const T log_total = std::log(total);
    for (std::size_t j = 0; j < in.size(); ++j) o[j] = (in[j] - mx) - log_total;
  }
  return out;
}

namespace {
template <typename T>
constexpr T kGeluC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
template <typename T>
constexpr T kGeluA = static_cast<T>(0.044715);
}  // namespace

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T x = a[i];
    const T inner = kGeluC<T> * (x + kGeluA<T> * x * x * x);
    out[i] = T(0.5) * x * (T(1) + std::tanh(inner));
  }
  return out;
}

template <typename T>
Tensor<T> gelu_derivative(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T x = a[i];
    const T inner = kGeluC<T> * (x + kGeluA<T> * x * x * x);
    const T t = std::tanh(inner);
    const T dinner = kGeluC<T> * (T(1) + T(3) * kGeluA<T> * x * x);
    out[i] = T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * dinner;
  }
  return out;
}

template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& a, std::vector<T>* norms) {
  Tensor<T> out = Tensor<T>::zeros(a.rows(), a.cols());
  if (norms) norms->assign(a.rows(), T(0));
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row(i);
    T sq = 0;
    for (T v : in) sq += v * v;
    const T norm = std::sqrt(sq);
    if (!(norm > static_cast<T>(kNormEpsilon))) {
      fail(ErrorCode::kZeroNormRow, "row " + std::to_string(i) + " has norm " +
                                        std::to_string(static_cast<double>(norm)));
    }
    auto o = out.row(i);
    for (std::size_t j = 0; j < in.size(); ++j) o[j] = in[j] / norm;
    if (norms) (*norms)[i] = norm;
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain,
                     const Tensor<T>& bias, Tensor<T>* normalized,
                     std::vector<T>* inv_std) {
  const std::size_t d = x.cols();
  if (gain.size() != d || bias.size() != d) {
    fail(ErrorCode::kDimensionMismatch, "layer_norm affine extent mismatch");
  }
  Tensor<T> out = Tensor<T>::zeros(x.rows(), d);
  if (normalized) *normalized = Tensor<T>::zeros(x.rows(), d);
  if (inv_std) inv_std->assign(x.rows(), T(0));
  const T inv_d = T(1) / static_cast<T>(d);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    T mean = 0;
    for (T v : in) mean += v;
    mean *= inv_d;
    T var = 0;
    for (T v : in) var += (v - mean) * (v - mean);
    var *= inv_d;
    const T inv = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEpsilon));
    auto o = out.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const T xhat = (in[j] - mean) * inv;
      if (normalized) (*normalized)(i, j) = xhat;
      o[j] = xhat * gain[j] + bias[j];
    }
    if (inv_std) (*inv_std)[i] = inv;
  }
  return out;
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows()) {
    fail(ErrorCode::kDimensionMismatch, "slice_rows out of range");
  }
  Tensor<T> out = Tensor<T>::zeros(count, a.cols());
  std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(begin * a.cols()),
              count * a.cols(), out.data().begin());
  return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols()) {
    fail(ErrorCode::kDimensionMismatch, "slice_cols out of range");
  }
  Tensor<T> out = Tensor<T>::zeros(a.rows(), count);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a(i, begin + j);
  return out;
}

template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>* const> parts) {
  if (parts.empty()) fail(ErrorCode::kDimensionMismatch, "concat_rows of nothing");
  const std::size_t c = parts.front()->cols();
  std::size_t r = 0;
  for (const auto* p : parts) {
    if (p->cols() != c) fail(ErrorCode::kDimensionMismatch, "concat_rows width");
    r += p->rows();
  }
  Tensor<T> out = Tensor<T>::zeros(r, c);
  auto it = out.data().begin();
  for (const auto* p : parts) it = std::copy(p->data().begin(), p->data().end(), it);
  return out;
}

template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>* const> parts) {
  if (parts.empty()) fail(ErrorCode::kDimensionMismatch, "concat_cols of nothing");
  const std::size_t r = parts.front()->rows();
  std::size_t c = 0;
  for (const auto* p : parts) {
    if (p->rows() != r) fail(ErrorCode::kDimensionMismatch, "concat_cols height");
    c += p->cols();
  }
  Tensor<T> out = Tensor<T>::zeros(r, c);
  std::size_t offset = 0;
  for (const auto* p : parts) {
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < p->cols(); ++j) out(i, offset + j) = (*p)(i, j);
    offset += p->cols();
  }
  return out;
}

template <typename T>
Tensor<T> diag(const Tensor<T>& a) {
  if (a.rows() != a.cols()) fail(ErrorCode::kNonSquare, "diag of non-square matrix");
  Tensor<T> out = Tensor<T>::zeros(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = a(i, i);
  return out;
}

template <typename T>
T sum_all(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.data()) acc += v;
  return acc;
}

}  // namespace kernels

#define CAPMATCH_INSTANTIATE_TENSOR(T)                                              \
  template class Tensor<T>;                                                         \
  template Tensor<T> l2_normalize(const Tensor<T>&);                                \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  namespace kernels {                                                               \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> matmul_tn(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> transpose(const Tensor<T>&);                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> scale(const Tensor<T>&, T);                                    \
  template Tensor<T> add_rowvec(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> sum_rows(const Tensor<T>&);                                    \
  template Tensor<T> mean_rows(const Tensor<T>&);                                   \
  template Tensor<T> repeat_rows(const Tensor<T>&, std::size_t);                    \
  template Tensor<T> row_max(const Tensor<T>&, std::vector<std::size_t>*);          \
  template Tensor<T> softmax_rows(const Tensor<T>&);                                \
  template Tensor<T> log_softmax_rows(const Tensor<T>&);                            \
  template Tensor<T> gelu(const Tensor<T>&);                                        \
  template Tensor<T> gelu_derivative(const Tensor<T>&);                             \
  template Tensor<T> l2_normalize_rows(const Tensor<T>&, std::vector<T>*);          \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                Tensor<T>*, std::vector<T>*);                       \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);        \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);        \
  template Tensor<T> concat_rows(std::span<const Tensor<T>* const>);                \
  template Tensor<T> concat_cols(std::span<const Tensor<T>* const>);                \
  template Tensor<T> diag(const Tensor<T>&);                                        \
  template T sum_all(const Tensor<T>&);                                             \
  }

CAPMATCH_INSTANTIATE_TENSOR(float)
CAPMATCH_INSTANTIATE_TENSOR(double)

#undef CAPMATCH_INSTANTIATE_TENSOR

}  // namespace capmatch
