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

#include "capmatch/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace capmatch {

namespace {

template <typename T>
ad::Var<T> directional_ce(ad::Var<T> logits) {
  // -(1/B) sum_i log softmax(logits)[i, i], written as 0 - mean so that a
  // zero loss is +0.
  const auto mean_log_prob = ad::mean_all(ad::diag(ad::log_softmax_rows(logits)));
  const auto zero = logits.tape()->constant(Tensor<T>::scalar(T(0)));
  return ad::sub(zero, mean_log_prob);
}

}  // namespace

template <typename T>
ad::Var<T> symmetric_ce(ad::Var<T> similarities, ad::Var<T> tau) {
  const Tensor<T>& s = similarities.value();
  if (s.rows() != s.cols() || s.rows() == 0) {
    fail(ErrorCode::kNonSquare, "contrastive loss needs a non-empty square matrix, got " +
                                    std::to_string(s.rows()) + "x" + std::to_string(s.cols()));
  }
  if (!(tau.value().item() > T(0))) {
    fail(ErrorCode::kNonPositiveTemperature, "temperature must be positive");
  }
  const auto logits = ad::div_scalar(similarities, tau);
  const auto rows = directional_ce(logits);
  const auto cols = directional_ce(ad::transpose(logits));
  return ad::scale(ad::add(rows, cols), T(0.5));
}

template <typename T>
T symmetric_ce(const Tensor<T>& similarities, T tau) {
  ad::Tape<T> tape(false);
  return symmetric_ce(tape.constant(similarities), tape.constant(Tensor<T>::scalar(tau)))
      .value()
      .item();
}

template <typename T>
TotalLoss<T> total_loss(std::optional<ad::Var<T>> qv_sims, std::optional<ad::Var<T>> qc_sims,
                        std::optional<ad::Var<T>> aug_sims, ad::Var<T> tau, ad::Var<T> tau_qc,
                        double lambda_aug) {
  if (!(lambda_aug >= 0.0)) fail(ErrorCode::kInvalidArgument, "lambda_aug must be >= 0");
  TotalLoss<T> out;
  std::optional<ad::Var<T>> total;
  auto accumulate = [&](ad::Var<T> term) { total = total ? ad::add(*total, term) : term; };
  if (qv_sims) {
    const auto l = symmetric_ce(*qv_sims, tau);
    out.parts.qv = static_cast<double>(l.value().item());
    accumulate(l);
  }
  if (qc_sims) {
    const auto l = symmetric_ce(*qc_sims, tau_qc.valid() ? tau_qc : tau);
    out.parts.qc = static_cast<double>(l.value().item());
    accumulate(l);
  }
  if (aug_sims) {
    const auto l = symmetric_ce(*aug_sims, tau);
    out.parts.aug = static_cast<double>(l.value().item());
    accumulate(ad::scale(l, static_cast<T>(lambda_aug)));
  }
  if (!total) fail(ErrorCode::kInvalidArgument, "total_loss needs at least one term");
  out.total = *total;
  out.parts.total = static_cast<double>(total->value().item());
  return out;
}

void adam_step(ParamSet<float>& params, const ad::GradMap<float>& grads, AdamState& state,
               double lr, const AdamHyper& hyper, std::span<const ParamClamp> clamps) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) fail(ErrorCode::kShapeMismatch, "gradient for unknown parameter '" + name + "'");
    if (!it->second.same_shape(g) || it->second.size() != g.size()) {
      fail(ErrorCode::kShapeMismatch, "gradient shape differs from parameter '" + name + "'");
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (const auto& [name, g] : grads) {
    Tensor<float>& p = params.at(name);
    auto mit = state.m.try_emplace(name, Tensor<float>(p.shape(), 0.0f)).first;
    auto vit = state.v.try_emplace(name, Tensor<float>(p.shape(), 0.0f)).first;
    auto pd = p.data();
    auto md = mit->second.data();
    auto vd = vit->second.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      const double gi = gd[i];
      const double m = hyper.beta1 * md[i] + (1.0 - hyper.beta1) * gi;
      const double v = hyper.beta2 * vd[i] + (1.0 - hyper.beta2) * gi * gi;
      md[i] = static_cast<float>(m);
      vd[i] = static_cast<float>(v);
      const double update = lr * (m / c1) / (std::sqrt(v / c2) + hyper.eps);
      pd[i] = static_cast<float>(pd[i] - update);
    }
  }
  for (const auto& c : clamps) {
    auto it = params.find(c.name);
    if (it == params.end()) continue;
    for (auto& x : it->second.data()) {
      x = static_cast<float>(std::clamp(static_cast<double>(x), c.lo, c.hi));
    }
  }
}

double scheduled_lr(double lr_max, std::uint64_t step, std::uint64_t warmup, std::uint64_t total) {
  if (warmup > 0 && step <= warmup) {
    return lr_max * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (total <= warmup) return lr_max;
  const double progress = std::min(1.0, static_cast<double>(step - warmup) /
                                            static_cast<double>(total - warmup));
  return lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template ad::Var<float> symmetric_ce(ad::Var<float>, ad::Var<float>);
template ad::Var<double> symmetric_ce(ad::Var<double>, ad::Var<double>);
template float symmetric_ce(const Tensor<float>&, float);
template double symmetric_ce(const Tensor<double>&, double);
template TotalLoss<float> total_loss(std::optional<ad::Var<float>>, std::optional<ad::Var<float>>,
                                     std::optional<ad::Var<float>>, ad::Var<float>, ad::Var<float>,
                                     double);
template TotalLoss<double> total_loss(std::optional<ad::Var<double>>, std::optional<ad::Var<double>>,
                                      std::optional<ad::Var<double>>, ad::Var<double>,
                                      ad::Var<double>, double);

}  // namespace capmatch
