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

#include "capmatch/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace capmatch::ad {

namespace k = capmatch::kernels;

template <typename T>
const Tensor<T>& Var<T>::value() const {
  if (!tape_) fail(ErrorCode::kInvalidArgument, "use of an unbound variable");
  return tape_->value(id_);
}

template <typename T>
Tape<T>::Tape(bool record) : record_(record) {}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), false, {}});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(const std::string& name, Tensor<T> value) {
  if (params_.count(name)) {
    fail(ErrorCode::kInvalidArgument, "parameter '" + name + "' registered twice");
  }
  nodes_.push_back(Node{std::move(value), record_, {}});
  params_[name] = nodes_.size() - 1;
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> parents,
                       BackwardFn backward) {
  return record(std::move(value), std::span<const Var<T>>(parents.begin(), parents.size()),
                std::move(backward));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::span<const Var<T>> parents,
                       BackwardFn backward) {
  bool needs = false;
  if (record_) {
    for (const auto& p : parents) {
      if (p.tape() != this) {
        fail(ErrorCode::kInvalidArgument, "op mixes variables from different tapes");
      }
      needs = needs || nodes_[p.id()].requires_grad;
    }
  }
  nodes_.push_back(Node{std::move(value), needs,
                        needs ? std::move(backward) : BackwardFn{}});
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
void Tape<T>::accumulate(const Var<T>& v, const Tensor<T>& grad) {
  const Tensor<T>& target = nodes_.at(v.id()).value;
  if (grad.size() != target.size()) {
    fail(ErrorCode::kInternal, "gradient size does not match its variable");
  }
  auto& slot = grads_.at(v.id());
  if (!slot) {
    slot = Tensor<T>(target.shape(), std::vector<T>(grad.data().begin(), grad.data().end()));
    return;
  }
  auto dst = slot->data();
  auto src = grad.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
GradMap<T> Tape<T>::backward(const Var<T>& loss) {
  if (loss.tape() != this || loss.id() >= nodes_.size()) {
    fail(ErrorCode::kDetachedLoss, "loss was not recorded on this tape");
  }
  if (consumed_) fail(ErrorCode::kDoubleBackward, "backward already ran on this tape");
  if (nodes_[loss.id()].value.size() != 1) {
    fail(ErrorCode::kInvalidArgument, "backward needs a scalar loss");
  }
  consumed_ = true;
  grads_.assign(nodes_.size(), std::nullopt);
  grads_[loss.id()] = Tensor<T>(nodes_[loss.id()].value.shape(), T(1));
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.backward || !grads_[id]) continue;
    // Copy: the closure may accumulate into other slots of grads_.
    const Tensor<T> g = *grads_[id];
    node.backward(*this, g);
  }
  GradMap<T> out;
  for (const auto& [name, id] : params_) {
    if (grads_[id]) {
      out.emplace(name, *grads_[id]);
    } else {
      out.emplace(name, Tensor<T>(nodes_[id].value.shape(), T(0)));
    }
  }
  grads_.clear();
  return out;
}

template <typename T>
void Tape<T>::reset() {
  nodes_.clear();
  grads_.clear();
  params_.clear();
  consumed_ = false;
}

// ---------------------------------------------------------------------------
// Ops

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& t = *a.tape();
  return t.record(k::matmul(a.value(), b.value()), {a, b},
                  [a, b](Tape<T>& tp, const Tensor<T>& g) {
                    if (tp.needs_grad(a)) tp.accumulate(a, k::matmul_nt(g, b.value()));
                    if (tp.needs_grad(b)) tp.accumulate(b, k::matmul_tn(a.value(), g));
                  });
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  Tape<T>& t = *a.tape();
  return t.record(k::matmul_nt(a.value(), b.value()), {a, b},
                  [a, b](Tape<T>& tp, const Tensor<T>& g) {
                    if (tp.needs_grad(a)) tp.accumulate(a, k::matmul(g, b.value()));
                    if (tp.needs_grad(b)) tp.accumulate(b, k::matmul_tn(g, a.value()));
                  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  return a.tape()->record(k::transpose(a.value()), {a},
                          [a](Tape<T>& tp, const Tensor<T>& g) {
                            tp.accumulate(a, k::transpose(g));
                          });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return a.tape()->record(k::add(a.value(), b.value()), {a, b},
                          [a, b](Tape<T>& tp, const Tensor<T>& g) {
                            if (tp.needs_grad(a)) tp.accumulate(a, g);
                            if (tp.needs_grad(b)) tp.accumulate(b, g);
                          });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return a.tape()->record(k::sub(a.value(), b.value()), {a, b},
                          [a, b](Tape<T>& tp, const Tensor<T>& g) {
                            if (tp.needs_grad(a)) tp.accumulate(a, g);
                            if (tp.needs_grad(b)) tp.accumulate(b, k::scale(g, T(-1)));
                          });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return a.tape()->record(k::mul(a.value(), b.value()), {a, b},
                          [a, b](Tape<T>& tp, const Tensor<T>& g) {
                            if (tp.needs_grad(a)) tp.accumulate(a, k::mul(g, b.value()));
                            if (tp.needs_grad(b)) tp.accumulate(b, k::mul(g, a.value()));
                          });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  return a.tape()->record(k::scale(a.value(), factor), {a},
                          [a, factor](Tape<T>& tp, const Tensor<T>& g) {
                            tp.accumulate(a, k::scale(g, factor));
                          });
}

template <typename T>
Var<T> div_scalar(Var<T> a, Var<T> s) {
  const T sv = s.value().item();
  if (sv == T(0)) fail(ErrorCode::kInvalidArgument, "division by zero scalar");
  return a.tape()->record(
      k::scale(a.value(), T(1) / sv), {a, s},
      [a, s](Tape<T>& tp, const Tensor<T>& g) {
        const T sv = s.value().item();
        if (tp.needs_grad(a)) tp.accumulate(a, k::scale(g, T(1) / sv));
        if (tp.needs_grad(s)) {
          const T dot = k::sum_all(k::mul(g, a.value()));
          tp.accumulate(s, Tensor<T>::scalar(-dot / (sv * sv)));
        }
      });
}

template <typename T>
Var<T> add_rowvec(Var<T> a, Var<T> v) {
  return a.tape()->record(k::add_rowvec(a.value(), v.value()), {a, v},
                          [a, v](Tape<T>& tp, const Tensor<T>& g) {
                            if (tp.needs_grad(a)) tp.accumulate(a, g);
                            if (tp.needs_grad(v)) tp.accumulate(v, k::sum_rows(g));
                          });
}

template <typename T>
Var<T> repeat_rows(Var<T> v, std::size_t n) {
  return v.tape()->record(k::repeat_rows(v.value(), n), {v},
                          [v](Tape<T>& tp, const Tensor<T>& g) {
                            tp.accumulate(v, k::sum_rows(g));
                          });
}

template <typename T>
Var<T> mean_rows(Var<T> a) {
  return a.tape()->record(k::mean_rows(a.value()), {a},
                          [a](Tape<T>& tp, const Tensor<T>& g) {
                            const std::size_t n = a.value().rows();
                            tp.accumulate(a, k::repeat_rows(k::scale(g, T(1) / static_cast<T>(n)), n));
                          });
}

template <typename T>
Var<T> mean_all(Var<T> a) {
  const Tensor<T>& av = a.value();
  const T mean = k::sum_all(av) / static_cast<T>(av.size());
  return a.tape()->record(Tensor<T>::scalar(mean), {a},
                          [a](Tape<T>& tp, const Tensor<T>& g) {
                            const Tensor<T>& av = a.value();
                            tp.accumulate(a, Tensor<T>(av.shape(), g.item() / static_cast<T>(av.size())));
                          });
}

template <typename T>
Var<T> sum_all(Var<T> a) {
  return a.tape()->record(Tensor<T>::scalar(k::sum_all(a.value())), {a},
                          [a](Tape<T>& tp, const Tensor<T>& g) {
                            tp.accumulate(a, Tensor<T>(a.value().shape(), g.item()));
                          });
}

template <typename T>
Var<T> row_max(Var<T> a) {
  std::vector<std::size_t> argmax;
  Tensor<T> out = k::row_max(a.value(), &argmax);
  return a.tape()->record(std::move(out), {a},
                          [a, argmax](Tape<T>& tp, const Tensor<T>& g) {
                            const Tensor<T>& av = a.value();
                            Tensor<T> da = Tensor<T>::zeros(av.rows(), av.cols());
                            for (std::size_t i = 0; i < av.rows(); ++i) da(i, argmax[i]) = g[i];
                            tp.accumulate(a, da);
                          });
}

template <typename T>
Var<T> softmax_rows(Var<T> a) {
  Tensor<T> y = k::softmax_rows(a.value());
  Tensor<T> saved = y;
  return a.tape()->record(std::move(y), {a},
                          [a, saved = std::move(saved)](Tape<T>& tp, const Tensor<T>& g) {
                            Tensor<T> dx = Tensor<T>::zeros(saved.rows(), saved.cols());
                            for (std::size_t i = 0; i < saved.rows(); ++i) {
                              T dot = 0;
                              for (std::size_t j = 0; j < saved.cols(); ++j) dot += g(i, j) * saved(i, j);
                              for (std::size_t j = 0; j < saved.cols(); ++j)
                                dx(i, j) = saved(i, j) * (g(i, j) - dot);
                            }
                            tp.accumulate(a, dx);
                          });
}

template <typename T>
Var<T> log_softmax_rows(Var<T> a) {
  return a.tape()->record(k::log_softmax_rows(a.value()), {a},
                          [a](Tape<T>& tp, const Tensor<T>& g) {
                            const Tensor<T> y = k::softmax_rows(a.value());
                            Tensor<T> dx = Tensor<T>::zeros(y.rows(), y.cols());
                            for (std::size_t i = 0; i < y.rows(); ++i) {
                              T total = 0;
                              for (std::size_t j = 0; j < y.cols(); ++j) total += g(i, j);
                              for (std::size_t j = 0; j < y.cols(); ++j)
                                dx(i, j) = g(i, j) - y(i, j) * total;
                            }
                            tp.accumulate(a, dx);
                          });
}

template <typename T>
Var<T> gelu(Var<T> a) {
  return a.tape()->record(k::gelu(a.value()), {a},
                          [a](Tape<T>& tp, const Tensor<T>& g) {
                            tp.accumulate(a, k::mul(g, k::gelu_derivative(a.value())));
                          });
}

template <typename T>
Var<T> l2_normalize_rows(Var<T> a) {
  std::vector<T> norms;
  Tensor<T> y = k::l2_normalize_rows(a.value(), &norms);
  Tensor<T> saved = y;
  return a.tape()->record(std::move(y), {a},
                          [a, saved = std::move(saved), norms](Tape<T>& tp, const Tensor<T>& g) {
                            Tensor<T> dx = Tensor<T>::zeros(saved.rows(), saved.cols());
                            for (std::size_t i = 0; i < saved.rows(); ++i) {
                              T dot = 0;
                              for (std::size_t j = 0; j < saved.cols(); ++j) dot += saved(i, j) * g(i, j);
                              for (std::size_t j = 0; j < saved.cols(); ++j)
                                dx(i, j) = (g(i, j) - saved(i, j) * dot) / norms[i];
                            }
                            tp.accumulate(a, dx);
                          });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias) {
  Tensor<T> xhat;
  std::vector<T> inv_std;
  Tensor<T> y = k::layer_norm(x.value(), gain.value(), bias.value(), &xhat, &inv_std);
  return x.tape()->record(
      std::move(y), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std](Tape<T>& tp, const Tensor<T>& g) {
        const std::size_t n = xhat.rows(), d = xhat.cols();
        const Tensor<T>& gv = gain.value();
        if (tp.needs_grad(x)) {
          Tensor<T> dx = Tensor<T>::zeros(n, d);
          const T dd = static_cast<T>(d);
          for (std::size_t i = 0; i < n; ++i) {
            T sum_dxhat = 0, sum_dxhat_xhat = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const T dxh = g(i, j) * gv[j];
              sum_dxhat += dxh;
              sum_dxhat_xhat += dxh * xhat(i, j);
            }
            for (std::size_t j = 0; j < d; ++j) {
              const T dxh = g(i, j) * gv[j];
              dx(i, j) = inv_std[i] / dd * (dd * dxh - sum_dxhat - xhat(i, j) * sum_dxhat_xhat);
            }
          }
          tp.accumulate(x, dx);
        }
        if (tp.needs_grad(gain)) tp.accumulate(gain, k::sum_rows(k::mul(g, xhat)));
        if (tp.needs_grad(bias)) tp.accumulate(bias, k::sum_rows(g));
      });
}

template <typename T>
Var<T> slice_rows(Var<T> a, std::size_t begin, std::size_t count) {
  return a.tape()->record(k::slice_rows(a.value(), begin, count), {a},
                          [a, begin](Tape<T>& tp, const Tensor<T>& g) {
                            const Tensor<T>& av = a.value();
                            Tensor<T> da = Tensor<T>::zeros(av.rows(), av.cols());
                            std::copy(g.data().begin(), g.data().end(),
                                      da.data().begin() + static_cast<std::ptrdiff_t>(begin * av.cols()));
                            tp.accumulate(a, da);
                          });
}

template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t count) {
  return a.tape()->record(k::slice_cols(a.value(), begin, count), {a},
                          [a, begin, count](Tape<T>& tp, const Tensor<T>& g) {
                            const Tensor<T>& av = a.value();
                            Tensor<T> da = Tensor<T>::zeros(av.rows(), av.cols());
                            for (std::size_t i = 0; i < av.rows(); ++i)
                              for (std::size_t j = 0; j < count; ++j) da(i, begin + j) = g(i, j);
                            tp.accumulate(a, da);
                          });
}

template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) fail(ErrorCode::kDimensionMismatch, "concat_rows of nothing");
  std::vector<const Tensor<T>*> values;
  for (const auto& p : parts) values.push_back(&p.value());
  std::vector<Var<T>> saved(parts.begin(), parts.end());
  return parts.front().tape()->record(
      k::concat_rows<T>(values), parts, [saved](Tape<T>& tp, const Tensor<T>& g) {
        std::size_t offset = 0;
        for (const auto& p : saved) {
          const std::size_t r = p.value().rows();
          if (tp.needs_grad(p)) tp.accumulate(p, k::slice_rows(g, offset, r));
          offset += r;
        }
      });
}

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts) {
  if (parts.empty()) fail(ErrorCode::kDimensionMismatch, "concat_cols of nothing");
  std::vector<const Tensor<T>*> values;
  for (const auto& p : parts) values.push_back(&p.value());
  std::vector<Var<T>> saved(parts.begin(), parts.end());
  return parts.front().tape()->record(
      k::concat_cols<T>(values), parts, [saved](Tape<T>& tp, const Tensor<T>& g) {
        std::size_t offset = 0;
        for (const auto& p : saved) {
          const std::size_t c = p.value().cols();
          if (tp.needs_grad(p)) tp.accumulate(p, k::slice_cols(g, offset, c));
          offset += c;
        }
      });
}

template <typename T>
Var<T> diag(Var<T> a) {
  return a.tape()->record(k::diag(a.value()), {a},
                          [a](Tape<T>& tp, const Tensor<T>& g) {
                            const std::size_t n = a.value().rows();
                            Tensor<T> da = Tensor<T>::zeros(n, n);
                            for (std::size_t i = 0; i < n; ++i) da(i, i) = g[i];
                            tp.accumulate(a, da);
                          });
}

template <typename T>
Var<T> assemble(std::span<const Var<T>> scalars, std::size_t rows, std::size_t cols) {
  if (scalars.size() != rows * cols || scalars.empty()) {
    fail(ErrorCode::kDimensionMismatch, "assemble: wrong number of scalars");
  }
  Tensor<T> out = Tensor<T>::zeros(rows, cols);
  for (std::size_t i = 0; i < scalars.size(); ++i) out[i] = scalars[i].value().item();
  std::vector<Var<T>> saved(scalars.begin(), scalars.end());
  return scalars.front().tape()->record(
      std::move(out), scalars, [saved](Tape<T>& tp, const Tensor<T>& g) {
        for (std::size_t i = 0; i < saved.size(); ++i)
          if (tp.needs_grad(saved[i])) tp.accumulate(saved[i], Tensor<T>::scalar(g[i]));
      });
}

#define CAPMATCH_INSTANTIATE_AD(T)                                            \
  template class Var<T>;                                                      \
  template class Tape<T>;                                                     \
  template Var<T> matmul(Var<T>, Var<T>);                                     \
  template Var<T> matmul_nt(Var<T>, Var<T>);                                  \
  template Var<T> transpose(Var<T>);                                          \
  template Var<T> add(Var<T>, Var<T>);                                        \
  template Var<T> sub(Var<T>, Var<T>);                                        \
  template Var<T> mul(Var<T>, Var<T>);                                        \
  template Var<T> scale(Var<T>, T);                                           \
  template Var<T> div_scalar(Var<T>, Var<T>);                                 \
  template Var<T> add_rowvec(Var<T>, Var<T>);                                 \
  template Var<T> repeat_rows(Var<T>, std::size_t);                           \
  template Var<T> mean_rows(Var<T>);                                          \
  template Var<T> mean_all(Var<T>);                                           \
  template Var<T> sum_all(Var<T>);                                            \
  template Var<T> row_max(Var<T>);                                            \
  template Var<T> softmax_rows(Var<T>);                                       \
  template Var<T> log_softmax_rows(Var<T>);                                   \
  template Var<T> gelu(Var<T>);                                               \
  template Var<T> l2_normalize_rows(Var<T>);                                  \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>);                         \
  template Var<T> slice_rows(Var<T>, std::size_t, std::size_t);               \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);               \
  template Var<T> concat_rows(std::span<const Var<T>>);                       \
  template Var<T> concat_cols(std::span<const Var<T>>);                       \
  template Var<T> diag(Var<T>);                                               \
  template Var<T> assemble(std::span<const Var<T>>, std::size_t, std::size_t);

CAPMATCH_INSTANTIATE_AD(float)
CAPMATCH_INSTANTIATE_AD(double)

#undef CAPMATCH_INSTANTIATE_AD

}  // namespace capmatch::ad
