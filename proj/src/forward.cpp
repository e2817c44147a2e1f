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

#include "capmatch/forward.hpp"

#include "capmatch/captionbranch.hpp"
#include "capmatch/interaction.hpp"
#include "capmatch/matching.hpp"

namespace capmatch {

template <typename T>
BatchSimilarities<T> batch_similarities(const Bound<T>& p, const ModelConfig& config,
                                        std::span<const ItemView<T>> items,
                                        std::span<const AugView<T>> aug_pairs,
                                        const BatchTerms& terms) {
  ad::Tape<T>& tape = p.tape();
  BatchSimilarities<T> out;
  std::vector<ad::Var<T>> enhanced;
  if (terms.qv || terms.aug) {
    enhanced.reserve(items.size());
    for (const auto& it : items) {
      enhanced.push_back(enhance_frames(tape.constant(*it.frames), tape.constant(*it.captions), p, config));
    }
  }

  if (terms.qv) {
    if (config.mode == MatchMode::kGlobal) {
      std::vector<ad::Var<T>> globals;
      for (const auto& it : items) globals.push_back(tape.constant(*it.query_global));
      out.qv = ad_match::global_similarity_matrix<T>(globals, enhanced);
    } else {
      std::vector<ad::Var<T>> words;
      for (const auto& it : items) words.push_back(tape.constant(*it.words));
      ad::Var<T> pt, pv;
      if (config.uses_learned_pooling()) {
        pt = p("pool.p_t");
        pv = p("pool.p_v");
      }
      out.qv = ad_match::finegrained_similarity_matrix<T>(words, enhanced, config.pooling, pt, pv);
    }
  }

  if (terms.qc) {
    std::vector<ad::Var<T>> globals, aggregates;
    for (const auto& it : items) {
      if (it.captions->rows() == 0) continue;
      globals.push_back(ad::l2_normalize_rows(tape.constant(*it.query_global)));
      aggregates.push_back(aggregate_captions(tape.constant(*it.captions), p, config));
    }
    if (globals.size() >= 2) {
      out.qc = ad::matmul_nt(ad::concat_rows<T>(globals), ad::concat_rows<T>(aggregates));
    }
  }

  if (terms.aug && aug_pairs.size() >= 2) {
    std::vector<ad::Var<T>> captions, videos;
    for (const auto& a : aug_pairs) {
      captions.push_back(tape.constant(*a.caption));
      videos.push_back(enhanced.at(a.item));
    }
    out.aug = ad_match::global_similarity_matrix<T>(captions, videos);
  }
  return out;
}

template <typename T>
std::optional<TotalLoss<T>> batch_loss(const Bound<T>& p, const ModelConfig& config,
                                       std::span<const ItemView<T>> items,
                                       std::span<const AugView<T>> aug_pairs,
                                       const BatchTerms& terms, double lambda_aug) {
  const auto sims = batch_similarities(p, config, items, aug_pairs, terms);
  if (!sims.qv && !sims.qc && !sims.aug) return std::nullopt;
  const ad::Var<T> tau_qc = p.has(kTauCaption) ? p(kTauCaption) : ad::Var<T>{};
  return total_loss<T>(sims.qv, sims.qc, sims.aug, p(kTau), tau_qc, lambda_aug);
}

template BatchSimilarities<float> batch_similarities(const Bound<float>&, const ModelConfig&,
                                                     std::span<const ItemView<float>>,
                                                     std::span<const AugView<float>>,
                                                     const BatchTerms&);
template BatchSimilarities<double> batch_similarities(const Bound<double>&, const ModelConfig&,
                                                      std::span<const ItemView<double>>,
                                                      std::span<const AugView<double>>,
                                                      const BatchTerms&);
template std::optional<TotalLoss<float>> batch_loss(const Bound<float>&, const ModelConfig&,
                                                    std::span<const ItemView<float>>,
                                                    std::span<const AugView<float>>,
                                                    const BatchTerms&, double);
template std::optional<TotalLoss<double>> batch_loss(const Bound<double>&, const ModelConfig&,
                                                     std::span<const ItemView<double>>,
                                                     std::span<const AugView<double>>,
                                                     const BatchTerms&, double);

}  // namespace capmatch
