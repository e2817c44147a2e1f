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

#include "capmatch/captionbranch.hpp"

namespace capmatch {

template <typename T>
ad::Var<T> aggregate_captions(ad::Var<T> captions, const Bound<T>& p, const ModelConfig& config) {
  if (captions.rows() == 0) fail(ErrorCode::kNoCaptions, "caption aggregation needs C >= 1");
  auto seq = captions;
  for (std::size_t l = 0; l < config.caption_layers; ++l)
    seq = encoder_block(p, "capagg.block" + std::to_string(l), seq, config.heads());
  return ad::l2_normalize_rows(ad::mean_rows(seq));
}

template <typename T>
ad::Var<T> query_caption_similarity(ad::Var<T> query_global, ad::Var<T> captions,
                                    const Bound<T>& p, const ModelConfig& config) {
  return ad::matmul_nt(ad::l2_normalize_rows(query_global), aggregate_captions(captions, p, config));
}

template ad::Var<float> aggregate_captions(ad::Var<float>, const Bound<float>&, const ModelConfig&);
template ad::Var<double> aggregate_captions(ad::Var<double>, const Bound<double>&, const ModelConfig&);
template ad::Var<float> query_caption_similarity(ad::Var<float>, ad::Var<float>, const Bound<float>&,
                                                 const ModelConfig&);
template ad::Var<double> query_caption_similarity(ad::Var<double>, ad::Var<double>,
                                                  const Bound<double>&, const ModelConfig&);

}  // namespace capmatch
