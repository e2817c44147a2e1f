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

#include "capmatch/autodiff.hpp"
#include "capmatch/model.hpp"

namespace capmatch {

// Caption set -> unit global caption vector: caption_layers encoder blocks
// without positional embeddings, mean pooling, L2 normalization.
template <typename T>
ad::Var<T> aggregate_captions(ad::Var<T> captions, const Bound<T>& params,
                              const ModelConfig& config);

// s_qc: cosine between the query [CLS] feature and the aggregated captions.
template <typename T>
ad::Var<T> query_caption_similarity(ad::Var<T> query_global, ad::Var<T> captions,
                                    const Bound<T>& params, const ModelConfig& config);

}  // namespace capmatch
