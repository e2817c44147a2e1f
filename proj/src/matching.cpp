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

#include "capmatch/matching.hpp"

#include <cmath>
#include <vector>

namespace capmatch {

namespace k = kernels;

namespace {

template <typename T>
void require_pooling(Pooling pooling, const void* text, const void* video) {
  if (pooling == Pooling::kLearnedWeighted && (text == nullptr || video == nullptr)) {
    fail(ErrorCode::kInvalidArgument, "learned pooling needs both pooling vectors");
  }
}

template <typename T>
T inv_sqrt_dim(std::size_t d) {
  return T(1) / std::sqrt(static_cast<T>(d));
}

template <typename T>
T pool_maxima(const Tensor<T>& tokens, const Tensor<T>& maxima, Pooling pooling,
              const Tensor<T>* vec) {
  if (pooling == Pooling::kUniform) {
    return k::sum_all(maxima) / static_cast<T>(maxima.size());
  }
  const Tensor<T> logits =
      k::scale(k::transpose(k::matmul_nt(tokens, *vec)), inv_sqrt_dim<T>(tokens.cols()));
  return k::matmul(k::softmax_rows(logits), maxima).item();
}

template <typename T>
ad::Var<T> pool_maxima(ad::Var<T> tokens, ad::Var<T> maxima, Pooling pooling, ad::Var<T> vec) {
  if (pooling == Pooling::kUniform) return ad::mean_all(maxima);
  const auto logits =
      ad::scale(ad::transpose(ad::matmul_nt(tokens, vec)), inv_sqrt_dim<T>(tokens.cols()));
  return ad::matmul(ad::softmax_rows(logits), maxima);
}

template <typename T>
void require_batch(std::size_t nq, std::size_t nv) {
  if (nq == 0 || nv == 0) fail(ErrorCode::kDimensionMismatch, "similarity over an empty batch");
}

}  // namespace

template <typename T>
Tensor<T> pooled_video(const Tensor<T>& frames) {
  if (frames.rows() == 0) fail(ErrorCode::kDimensionMismatch, "video without frames");
  return k::l2_normalize_rows(k::mean_rows(frames));
}

template <typename T>
T global_similarity(const Tensor<T>& query_global, const Tensor<T>& frames) {
  if (query_global.cols() != frames.cols()) {
    fail(ErrorCode::kDimensionMismatch, "query and frames differ in width");
  }
  return k::matmul_nt(k::l2_normalize_rows(query_global), pooled_video(frames)).item();
}

template <typename T>
T finegrained_similarity(const Tensor<T>& words, const Tensor<T>& frames, Pooling pooling,
                         PoolingVectorsT<T> params) {
  require_pooling<T>(pooling, params.text, params.video);
  if (words.cols() != frames.cols()) fail(ErrorCode::kDimensionMismatch, "words and frames differ in width");
  if (words.rows() == 0 || frames.rows() == 0) {
    fail(ErrorCode::kDimensionMismatch, "fine-grained matching needs W, F >= 1");
  }
  const Tensor<T> sims = k::matmul_nt(words, frames);
  const T t2v = pool_maxima(words, k::row_max(sims), pooling, params.text);
  const T v2t = pool_maxima(frames, k::row_max(k::transpose(sims)), pooling, params.video);
  return (t2v + v2t) * T(0.5);
}

template <typename T>
Tensor<T> similarity_matrix(std::span<const Tensor<T>* const> queries,
                            std::span<const Tensor<T>* const> videos, MatchMode mode,
                            Pooling pooling, PoolingVectorsT<T> params) {
  require_batch<T>(queries.size(), videos.size());
  const std::size_t d = queries.front()->cols();
  for (const auto* q : queries)
    if (q->cols() != d) fail(ErrorCode::kDimensionMismatch, "queries differ in width");
  for (const auto* v : videos)
    if (v->cols() != d) fail(ErrorCode::kDimensionMismatch, "videos differ in width from queries");

  if (mode == MatchMode::kGlobal) {
    std::vector<Tensor<T>> pooled;
    pooled.reserve(videos.size());
    for (const auto* v : videos) pooled.push_back(pooled_video(*v));
    std::vector<const Tensor<T>*> pooled_ptrs;
    for (const auto& p : pooled) pooled_ptrs.push_back(&p);
    return k::matmul_nt(k::l2_normalize_rows(k::concat_rows<T>(queries)),
                        k::concat_rows<T>(pooled_ptrs));
  }
  Tensor<T> out = Tensor<T>::zeros(queries.size(), videos.size());
  for (std::size_t i = 0; i < queries.size(); ++i)
    for (std::size_t j = 0; j < videos.size(); ++j)
      out(i, j) = finegrained_similarity(*queries[i], *videos[j], pooling, params);
  return out;
}

namespace ad_match {

template <typename T>
ad::Var<T> pooled_video(ad::Var<T> frames) {
  return ad::l2_normalize_rows(ad::mean_rows(frames));
}

template <typename T>
ad::Var<T> global_similarity(ad::Var<T> query_global, ad::Var<T> frames) {
  return ad::matmul_nt(ad::l2_normalize_rows(query_global), pooled_video(frames));
}

template <typename T>
ad::Var<T> finegrained_similarity(ad::Var<T> words, ad::Var<T> frames, Pooling pooling,
                                  ad::Var<T> pool_text, ad::Var<T> pool_video) {
  if (pooling == Pooling::kLearnedWeighted && (!pool_text.valid() || !pool_video.valid())) {
    fail(ErrorCode::kInvalidArgument, "learned pooling needs both pooling vectors");
  }
  const auto sims = ad::matmul_nt(words, frames);
  const auto t2v = pool_maxima(words, ad::row_max(sims), pooling, pool_text);
  const auto v2t = pool_maxima(frames, ad::row_max(ad::transpose(sims)), pooling, pool_video);
  return ad::scale(ad::add(t2v, v2t), T(0.5));
}

template <typename T>
ad::Var<T> global_similarity_matrix(std::span<const ad::Var<T>> query_globals,
                                    std::span<const ad::Var<T>> video_frames) {
  require_batch<T>(query_globals.size(), video_frames.size());
  std::vector<ad::Var<T>> pooled;
  pooled.reserve(video_frames.size());
  for (const auto& v : video_frames) pooled.push_back(pooled_video(v));
  return ad::matmul_nt(ad::l2_normalize_rows(ad::concat_rows<T>(query_globals)),
                       ad::concat_rows<T>(pooled));
}

template <typename T>
ad::Var<T> finegrained_similarity_matrix(std::span<const ad::Var<T>> query_words,
                                         std::span<const ad::Var<T>> video_frames,
                                         Pooling pooling, ad::Var<T> pool_text,
                                         ad::Var<T> pool_video) {
  require_batch<T>(query_words.size(), video_frames.size());
  std::vector<ad::Var<T>> cells;
  cells.reserve(query_words.size() * video_frames.size());
  for (const auto& q : query_words)
    for (const auto& v : video_frames)
      cells.push_back(finegrained_similarity(q, v, pooling, pool_text, pool_video));
  return ad::assemble<T>(cells, query_words.size(), video_frames.size());
}

}  // namespace ad_match

#define CAPMATCH_INSTANTIATE_MATCHING(T)                                                    \
  template Tensor<T> pooled_video(const Tensor<T>&);                                        \
  template T global_similarity(const Tensor<T>&, const Tensor<T>&);                         \
  template T finegrained_similarity(const Tensor<T>&, const Tensor<T>&, Pooling,            \
                                    PoolingVectorsT<T>);                                    \
  template Tensor<T> similarity_matrix(std::span<const Tensor<T>* const>,                   \
                                       std::span<const Tensor<T>* const>, MatchMode,        \
                                       Pooling, PoolingVectorsT<T>);                        \
  namespace ad_match {                                                                      \
  template ad::Var<T> pooled_video(ad::Var<T>);                                             \
  template ad::Var<T> global_similarity(ad::Var<T>, ad::Var<T>);                            \
  template ad::Var<T> finegrained_similarity(ad::Var<T>, ad::Var<T>, Pooling, ad::Var<T>,   \
                                             ad::Var<T>);                                   \
  template ad::Var<T> global_similarity_matrix(std::span<const ad::Var<T>>,                 \
                                               std::span<const ad::Var<T>>);                \
  template ad::Var<T> finegrained_similarity_matrix(std::span<const ad::Var<T>>,            \
                                                    std::span<const ad::Var<T>>, Pooling,   \
                                                    ad::Var<T>, ad::Var<T>);                \
  }

CAPMATCH_INSTANTIATE_MATCHING(float)
CAPMATCH_INSTANTIATE_MATCHING(double)

#undef CAPMATCH_INSTANTIATE_MATCHING

}  // namespace capmatch
