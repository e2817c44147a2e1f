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

#include "capmatch/captionops.hpp"

#include <algorithm>
#include <numeric>

#include "json.hpp"

namespace capmatch {

FilteredCaptions filter_captions(const EmbeddingArchive& archive, std::size_t k) {
  if (archive.split() != Split::kTrain) {
    fail(ErrorCode::kSplitMisuse, std::string("caption filtering uses ground-truth queries and is "
                                              "restricted to the train split, got '") +
                                      split_name(archive.split()) + "'");
  }
  if (k < 1) fail(ErrorCode::kInvalidArgument, "caption filtering needs k >= 1");

  FilteredCaptions out;
  out.top_k = k;
  out.archive_fingerprint = archive.fingerprint();
  out.selected.resize(archive.size());
  for (std::size_t i = 0; i < archive.size(); ++i) {
    const auto& captions = archive.videos()[i].captions;
    if (captions.rows() == 0) continue;
    const Tensor<float> sims = kernels::matmul_nt(archive.queries()[i].global, captions);
    std::vector<std::size_t> order(captions.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
    order.resize(std::min(k, order.size()));
    out.selected[i] = std::move(order);
  }
  return out;
}

std::string FilteredCaptions::to_json(const EmbeddingArchive& archive) const {
  if (archive_fingerprint != archive.fingerprint() || selected.size() != archive.size()) {
    fail(ErrorCode::kArchiveMismatch, "filtered captions were computed for a different archive");
  }
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < selected.size(); ++i) j[archive.videos()[i].id] = selected[i];
  return j.dump();
}

std::vector<AugmentationPair> build_augmentation_pairs(const EmbeddingArchive& archive,
                                                       const FilteredCaptions& filtered) {
  if (filtered.archive_fingerprint != archive.fingerprint() ||
      filtered.selected.size() != archive.size()) {
    fail(ErrorCode::kArchiveMismatch, "filtered captions were computed for a different archive");
  }
  std::vector<AugmentationPair> pairs;
  for (std::size_t i = 0; i < archive.size(); ++i) {
    const auto& captions = archive.videos()[i].captions;
    for (std::size_t idx : filtered.selected[i]) {
      if (idx >= captions.rows()) {
        fail(ErrorCode::kArchiveMismatch, "caption index out of range for video '" +
                                              archive.videos()[i].id + "'");
      }
      pairs.push_back({i, idx, kernels::slice_rows(captions, idx, 1)});
    }
  }
  return pairs;
}

}  // namespace capmatch
