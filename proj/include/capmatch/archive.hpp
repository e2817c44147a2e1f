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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "capmatch/tensor.hpp"

namespace capmatch {

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split split) noexcept;
Split parse_split(const std::string& name);

// One text query: word-level token embeddings (W x D) and the global [CLS]
// feature (1 x D).
struct QueryItem {
  std::string id;
  Tensor<float> words;
  Tensor<float> global;
};

// One video: F frame embeddings and C caption [CLS] embeddings. C may be 0
// for videos that come without captions.
struct VideoItem {
  std::string id;
  Tensor<float> frames;
  Tensor<float> captions;
  std::optional<std::vector<std::string>> caption_texts;

  std::size_t caption_count() const noexcept { return captions.rows(); }
  bool has_captions() const noexcept { return captions.rows() > 0; }
};

// Index-aligned query/video corpus: queries[i] is the annotated match of
// videos[i].
//
// The archive keeps the embeddings exactly as stored on disk in raw_queries /
// raw_videos, and a row-normalized copy in queries / videos that every
// consumer reads. Normalization happens once, in from_raw().
class EmbeddingArchive {
 public:
  EmbeddingArchive() = default;

  // Validates the invariants and builds the normalized copy.
  static EmbeddingArchive from_raw(std::size_t dim, Split split,
                                   std::vector<QueryItem> queries,
                                   std::vector<VideoItem> videos,
                                   std::size_t max_words = kDefaultMaxWords);

  static constexpr std::size_t kDefaultMaxWords = 32;

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return queries_.size(); }
  Split split() const noexcept { return split_; }

  const std::vector<QueryItem>& queries() const noexcept { return queries_; }
  const std::vector<VideoItem>& videos() const noexcept { return videos_; }
  const std::vector<QueryItem>& raw_queries() const noexcept { return raw_queries_; }
  const std::vector<VideoItem>& raw_videos() const noexcept { return raw_videos_; }

  // Stable digest of ids, shapes and split; used to detect derived data that
  // was computed against a different archive.
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }

  // Bitwise equality of every tensor plus ids, split and caption texts.
  bool bitwise_equal(const EmbeddingArchive& other) const;

 private:
  std::size_t dim_ = 0;
  Split split_ = Split::kTrain;
  std::vector<QueryItem> raw_queries_;
  std::vector<VideoItem> raw_videos_;
  std::vector<QueryItem> queries_;
  std::vector<VideoItem> videos_;
  std::uint64_t fingerprint_ = 0;
};

struct ReadOptions {
  std::size_t max_words = EmbeddingArchive::kDefaultMaxWords;
};

// CVRA v1: manifest.json plus one little-endian float32 blob per tensor group
// and an optional captions.jsonl sidecar.
void write_archive(const EmbeddingArchive& archive, const std::filesystem::path& dir);
EmbeddingArchive read_archive(const std::filesystem::path& dir,
                              const ReadOptions& options = {});

struct SynthConfig {
  std::size_t n = 64;
  std::size_t dim = 32;
  std::size_t frames = 4;
  std::size_t captions = 5;
  std::size_t words = 8;
  double sigma_q = 0.3;
  double sigma_v = 0.3;
  double sigma_c = 0.3;
  double sigma_w = 0.1;
  double distractor_fraction = 0.0;
  std::uint64_t seed = 7;
  Split split = Split::kTrain;
  bool caption_text = false;
};

// Synthetic corpus around per-item latent unit vectors. Noise vectors are
// isotropic Gaussians scaled so that sigma is the expected noise norm
// relative to the unit latent.
EmbeddingArchive synthesize(const SynthConfig& config);

}  // namespace capmatch
