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
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "capmatch/archive.hpp"
#include "capmatch/model.hpp"
#include "capmatch/tensor.hpp"

namespace capmatch {

enum class Direction { kTextToVideo, kVideoToText };

const char* to_string(Direction direction) noexcept;
Direction parse_direction(const std::string& s);

struct FusionConfig {
  // Weight of the query-caption score. Videos without captions always use the
  // query-video score of their raw frames alone.
  double alpha = 1.0;
};

struct RetrievalReport {
  Direction direction = Direction::kTextToVideo;
  double r1 = 0;
  double r5 = 0;
  double r10 = 0;
  double mdr = 0;
  double mnr = 0;
  std::vector<std::size_t> ranks;

  std::size_t n() const noexcept { return ranks.size(); }
};

// Splits [0, n) into contiguous chunks over up to `threads` workers. Each
// index is visited exactly once; callers write disjoint outputs.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

// Metrics over 1-based ground-truth ranks.
RetrievalReport report_from_ranks(std::vector<std::size_t> ranks, Direction direction);

// Ranks of the index-aligned ground truth in a (queries x candidates) score
// matrix: rank_i = 1 + #{j != i : s_ij >= s_ii}.
RetrievalReport report_from_scores(const Tensor<float>& scores, Direction direction);

// Precomputed per-video representations under fixed parameters, then cheap
// scoring of any query against any video of the archive.
class Scorer {
 public:
  Scorer(const ModelConfig& config, const ParamSet<float>& params, const EmbeddingArchive& archive,
         FusionConfig fusion = {}, std::size_t threads = 1);

  std::size_t size() const noexcept { return videos_.size(); }

  float query_video(std::size_t query, std::size_t video) const;
  // std::nullopt for videos without captions.
  std::optional<float> query_caption(std::size_t query, std::size_t video) const;
  float fused(std::size_t query, std::size_t video) const;

  // queries x videos fused scores.
  Tensor<float> score_matrix() const;
  Tensor<float> query_video_matrix() const;

  RetrievalReport rank_all(Direction direction) const;

  // Descending score, ties by ascending id, length min(k, N).
  std::vector<std::pair<std::string, float>> retrieve_topk(std::size_t query, std::size_t k) const;

 private:
  struct VideoRep {
    Tensor<float> enhanced;  // F x D
    Tensor<float> pooled;    // 1 x D, global matching only
    std::optional<Tensor<float>> captions;  // 1 x D aggregate
  };
  struct QueryRep {
    Tensor<float> global;  // 1 x D, normalized
    const Tensor<float>* words;
  };

  Tensor<float> matrix(bool fuse) const;

  ModelConfig config_;
  FusionConfig fusion_;
  std::size_t threads_;
  const EmbeddingArchive* archive_;
  std::optional<Tensor<float>> pool_text_;
  std::optional<Tensor<float>> pool_video_;
  std::vector<VideoRep> videos_;
  std::vector<QueryRep> queries_;
};

enum class ReportFormat { kJson, kTable };

// kJson: one line, sorted keys, 4-decimal fixed floats. kTable: aligned
// columns R@1 R@5 R@10 MdR MnR, one row per report.
std::string emit_report(const RetrievalReport& report, ReportFormat format,
                        bool include_ranks = false);
std::string emit_reports(const std::vector<RetrievalReport>& reports, ReportFormat format,
                         bool include_ranks = false);

// Grouped convenience: t2v then v2t reports on fused scores.
std::vector<RetrievalReport> evaluate(const ModelConfig& config, const ParamSet<float>& params,
                                      const EmbeddingArchive& archive, FusionConfig fusion = {},
                                      std::size_t threads = 1);

}  // namespace capmatch
