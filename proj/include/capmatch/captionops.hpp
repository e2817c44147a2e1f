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

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "capmatch/archive.hpp"

namespace capmatch {

// Per video, caption indices ordered by cosine similarity to the video's
// ground-truth query (descending, ties by ascending index), truncated to
// min(top_k, C).
struct FilteredCaptions {
  std::size_t top_k = 1;
  std::vector<std::vector<std::size_t>> selected;
  std::uint64_t archive_fingerprint = 0;

  // {video_id: [caption indices]}
  std::string to_json(const EmbeddingArchive& archive) const;
};

// Train split only: the ground-truth query is not available at test time.
FilteredCaptions filter_captions(const EmbeddingArchive& archive, std::size_t k);

// A selected caption used as a surrogate query for its video.
struct AugmentationPair {
  std::size_t video_index;
  std::size_t caption_index;
  Tensor<float> caption;  // 1 x D, normalized
};

std::vector<AugmentationPair> build_augmentation_pairs(const EmbeddingArchive& archive,
                                                       const FilteredCaptions& filtered);

}  // namespace capmatch
