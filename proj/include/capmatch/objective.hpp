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

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "capmatch/autodiff.hpp"
#include "capmatch/model.hpp"

namespace capmatch {

// Symmetric InfoNCE over a square similarity matrix whose diagonal holds the
// matched pairs: 0.5 * (row-direction CE + column-direction CE) on s / tau.
template <typename T>
ad::Var<T> symmetric_ce(ad::Var<T> similarities, ad::Var<T> tau);

// Value-only convenience.
template <typename T>
T symmetric_ce(const Tensor<T>& similarities, T tau);

struct LossBreakdown {
  double total = 0;
  double qv = 0;
  double qc = 0;
  double aug = 0;
};

template <typename T>
struct TotalLoss {
  ad::Var<T> total;
  LossBreakdown parts;
};

// L = L_QV + L_QC + lambda_aug * L_AUG. Absent terms contribute nothing; at
// least one term is required. tau_qc is the temperature of the query-caption
// term (the same variable as tau unless the model keeps a separate one).
template <typename T>
TotalLoss<T> total_loss(std::optional<ad::Var<T>> qv_sims, std::optional<ad::Var<T>> qc_sims,
                        std::optional<ad::Var<T>> aug_sims, ad::Var<T> tau, ad::Var<T> tau_qc,
                        double lambda_aug);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  ParamSet<float> m;
  ParamSet<float> v;
};

struct ParamClamp {
  std::string name;
  double lo;
  double hi;
};

// One bias-corrected Adam update of every parameter present in `grads`,
// followed by the clamps.
void adam_step(ParamSet<float>& params, const ad::GradMap<float>& grads, AdamState& state,
               double lr, const AdamHyper& hyper = {}, std::span<const ParamClamp> clamps = {});

// Linear warmup over the first `warmup` steps, then cosine decay reaching 0 at
// `total`. Steps are 1-based.
double scheduled_lr(double lr_max, std::uint64_t step, std::uint64_t warmup, std::uint64_t total);

}  // namespace capmatch
