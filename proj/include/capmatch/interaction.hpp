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

// Video-caption interaction: maps F x D frames and C x D caption [CLS]
// embeddings to F x D enhanced frames. All strategies fail with kNoCaptions
// when C = 0; callers route such videos to the caption-free path.

// v_i + c_g with c_g the caption mean.
template <typename T>
ad::Var<T> interact_sum(ad::Var<T> frames, ad::Var<T> captions);

// Linear(2D -> D), GELU, Linear(D -> D) on [v_i, c_g]; no residual.
template <typename T>
ad::Var<T> interact_mlp(ad::Var<T> frames, ad::Var<T> captions, const Bound<T>& params);

// L encoder blocks over the joint sequence {frames + type_0, captions + type_1};
// the first F output tokens are returned.
template <typename T>
ad::Var<T> interact_cross(ad::Var<T> frames, ad::Var<T> captions, const Bound<T>& params,
                          const ModelConfig& config);

// One co-attentional block, then the video stream plus learned positional
// embeddings through L temporal encoder blocks. The caption stream output of
// the co-attentional block is not used further.
template <typename T>
ad::Var<T> interact_coattn(ad::Var<T> frames, ad::Var<T> captions, const Bound<T>& params,
                           const ModelConfig& config);

// Dispatch on config.interaction.strategy. Strategy kNone and videos without
// captions return the frames unchanged.
template <typename T>
ad::Var<T> enhance_frames(ad::Var<T> frames, ad::Var<T> captions, const Bound<T>& params,
                          const ModelConfig& config);

}  // namespace capmatch
