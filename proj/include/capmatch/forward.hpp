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

#include <optional>
#include <span>
#include <vector>

#include "capmatch/autodiff.hpp"
#include "capmatch/model.hpp"
#include "capmatch/objective.hpp"

namespace capmatch {

// One training triple viewed in scalar type T.
template <typename T>
struct ItemView {
  const Tensor<T>* words = nullptr;
  const Tensor<T>* query_global = nullptr;
  const Tensor<T>* frames = nullptr;
  const Tensor<T>* captions = nullptr;  // may have zero rows
};

// Caption used as a surrogate query for batch item `item`.
template <typename T>
struct AugView {
  const Tensor<T>* caption = nullptr;  // 1 x D
  std::size_t item = 0;
};

struct BatchTerms {
  bool qv = true;
  bool qc = true;
  bool aug = true;
};

template <typename T>
struct BatchSimilarities {
  std::optional<ad::Var<T>> qv;
  // Restricted to items with at least one caption; absent below two such items.
  std::optional<ad::Var<T>> qc;
  // Global matching of captions against their videos; absent below two pairs.
  std::optional<ad::Var<T>> aug;
};

template <typename T>
BatchSimilarities<T> batch_similarities(const Bound<T>& params, const ModelConfig& config,
                                        std::span<const ItemView<T>> items,
                                        std::span<const AugView<T>> aug_pairs,
                                        const BatchTerms& terms);

// Full objective over a batch; std::nullopt when no term has enough items.
template <typename T>
std::optional<TotalLoss<T>> batch_loss(const Bound<T>& params, const ModelConfig& config,
                                       std::span<const ItemView<T>> items,
                                       std::span<const AugView<T>> aug_pairs,
                                       const BatchTerms& terms, double lambda_aug);

}  // namespace capmatch
