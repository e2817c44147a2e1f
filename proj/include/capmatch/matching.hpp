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

#include <span>

#include "capmatch/autodiff.hpp"
#include "capmatch/model.hpp"
#include "capmatch/tensor.hpp"

namespace capmatch {

// Query-video similarity s_qv.
//
// Global matching compares the query [CLS] feature with the mean of the
// frame embeddings by cosine; the mean is not re-normalized beforehand since
// cosine normalizes it anyway.
//
// Fine-grained matching is the Max-Mean pipeline: every word keeps its best
// frame similarity and every frame its best word similarity; the per-token
// maxima are pooled uniformly or with softmax weights softmax_j(<w_j, p_t>/sqrt(D))
// (frames use p_v), and the two directions are averaged. Inputs are expected to
// be row-normalized already.

template <typename T>
struct PoolingVectorsT {
  const Tensor<T>* text = nullptr;
  const Tensor<T>* video = nullptr;
};

// Normalized mean of the frame rows: the pooled video vector of global matching.
template <typename T>
Tensor<T> pooled_video(const Tensor<T>& frames);

template <typename T>
T global_similarity(const Tensor<T>& query_global, const Tensor<T>& frames);

template <typename T>
T finegrained_similarity(const Tensor<T>& words, const Tensor<T>& frames, Pooling pooling,
                         PoolingVectorsT<T> params = {});

// Batched scores; entry (i, j) equals the pairwise function on query i and
// video j bit for bit. `queries` holds [CLS] rows for Global mode and word
// blocks for FineGrained mode.
template <typename T>
Tensor<T> similarity_matrix(std::span<const Tensor<T>* const> queries,
                            std::span<const Tensor<T>* const> videos, MatchMode mode,
                            Pooling pooling, PoolingVectorsT<T> params = {});

namespace ad_match {

template <typename T>
ad::Var<T> pooled_video(ad::Var<T> frames);

template <typename T>
ad::Var<T> global_similarity(ad::Var<T> query_global, ad::Var<T> frames);

// pool_text / pool_video are ignored for Uniform pooling.
template <typename T>
ad::Var<T> finegrained_similarity(ad::Var<T> words, ad::Var<T> frames, Pooling pooling,
                                  ad::Var<T> pool_text = {}, ad::Var<T> pool_video = {});

// Global mode: rows of normalized queries against pooled videos.
template <typename T>
ad::Var<T> global_similarity_matrix(std::span<const ad::Var<T>> query_globals,
                                    std::span<const ad::Var<T>> video_frames);

template <typename T>
ad::Var<T> finegrained_similarity_matrix(std::span<const ad::Var<T>> query_words,
                                         std::span<const ad::Var<T>> video_frames,
                                         Pooling pooling, ad::Var<T> pool_text = {},
                                         ad::Var<T> pool_video = {});

}  // namespace ad_match

}  // namespace capmatch
