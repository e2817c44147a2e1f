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

#include "capmatch/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <thread>

#include "capmatch/autodiff.hpp"
#include "capmatch/captionbranch.hpp"
#include "capmatch/interaction.hpp"
#include "capmatch/matching.hpp"

namespace capmatch {

namespace k = kernels;

const char* to_string(Direction direction) noexcept {
  return direction == Direction::kTextToVideo ? "t2v" : "v2t";
}

Direction parse_direction(const std::string& s) {
  if (s == "t2v") return Direction::kTextToVideo;
  if (s == "v2t") return Direction::kVideoToText;
  fail(ErrorCode::kInvalidArgument, "unknown direction '" + s + "' (expected t2v or v2t)");
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&, t] {
      try {
        const std::size_t end = std::min(n, (t + 1) * chunk);
        for (std::size_t i = t * chunk; i < end; ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

RetrievalReport report_from_ranks(std::vector<std::size_t> ranks, Direction direction) {
  const std::size_t n = ranks.size();
  if (n == 0) fail(ErrorCode::kEmptyCorpus, "no queries to rank");
  RetrievalReport r;
  r.direction = direction;
  r.ranks = std::move(ranks);
  std::size_t hit1 = 0, hit5 = 0, hit10 = 0;
  double total = 0;
  for (auto rank : r.ranks) {
    if (rank == 0) fail(ErrorCode::kInvalidArgument, "ranks are 1-based");
    hit1 += rank <= 1;
    hit5 += rank <= 5;
    hit10 += rank <= 10;
    total += static_cast<double>(rank);
  }
  const double dn = static_cast<double>(n);
  r.r1 = 100.0 * static_cast<double>(hit1) / dn;
  r.r5 = 100.0 * static_cast<double>(hit5) / dn;
  r.r10 = 100.0 * static_cast<double>(hit10) / dn;
  r.mnr = total / dn;
  auto sorted = r.ranks;
  std::sort(sorted.begin(), sorted.end());
  r.mdr = static_cast<double>(sorted[(n - 1) / 2]);
  return r;
}

RetrievalReport report_from_scores(const Tensor<float>& scores, Direction direction) {
  const std::size_t n = scores.rows();
  if (n == 0) fail(ErrorCode::kEmptyCorpus, "no queries to rank");
  if (scores.cols() != n) {
    fail(ErrorCode::kNonSquare, "ground truth is index-aligned; score matrix must be square");
  }
  std::vector<std::size_t> ranks(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = scores.row(i);
    const float gt = row[i];
    std::size_t rank = 1;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && row[j] >= gt) ++rank;
    ranks[i] = rank;
  }
  return report_from_ranks(std::move(ranks), direction);
}

Scorer::Scorer(const ModelConfig& config, const ParamSet<float>& params,
               const EmbeddingArchive& archive, FusionConfig fusion, std::size_t threads)
    : config_(config), fusion_(fusion), threads_(std::max<std::size_t>(1, threads)),
      archive_(&archive) {
  config_.validate();
  if (archive.size() == 0) fail(ErrorCode::kEmptyCorpus, "archive has no items");
  if (archive.dim() != config.dim) {
    fail(ErrorCode::kDimensionMismatch, "archive width " + std::to_string(archive.dim()) +
                                            " differs from model width " + std::to_string(config.dim));
  }
  if (!std::isfinite(fusion.alpha)) fail(ErrorCode::kInvalidConfig, "alpha must be finite");
  if (config_.uses_learned_pooling()) {
    pool_text_ = params.at("pool.p_t");
    pool_video_ = params.at("pool.p_v");
  }

  const std::size_t n = archive.size();
  videos_.resize(n);
  parallel_for(n, threads_, [&](std::size_t i) {
    ad::Tape<float> tape(false);
    Bound<float> p(tape, params, [](const std::string&) { return false; });
    const VideoItem& v = archive.videos()[i];
    const auto frames = tape.constant(v.frames);
    const auto captions = tape.constant(v.captions);
    VideoRep rep;
    rep.enhanced = enhance_frames(frames, captions, p, config_).value();
    if (config_.mode == MatchMode::kGlobal) rep.pooled = pooled_video(rep.enhanced);
    if (v.has_captions()) rep.captions = aggregate_captions(captions, p, config_).value();
    videos_[i] = std::move(rep);
  });
  queries_.reserve(n);
  for (const auto& q : archive.queries()) {
    queries_.push_back(QueryRep{k::l2_normalize_rows(q.global), &q.words});
  }
}

float Scorer::query_video(std::size_t query, std::size_t video) const {
  const QueryRep& q = queries_.at(query);
  const VideoRep& v = videos_.at(video);
  if (config_.mode == MatchMode::kGlobal) return k::matmul_nt(q.global, v.pooled).item();
  PoolingVectorsT<float> pv{pool_text_ ? &*pool_text_ : nullptr, pool_video_ ? &*pool_video_ : nullptr};
  return finegrained_similarity(*q.words, v.enhanced, config_.pooling, pv);
}

std::optional<float> Scorer::query_caption(std::size_t query, std::size_t video) const {
  const VideoRep& v = videos_.at(video);
  if (!v.captions) return std::nullopt;
  return k::matmul_nt(queries_.at(query).global, *v.captions).item();
}

float Scorer::fused(std::size_t query, std::size_t video) const {
  const float qv = query_video(query, video);
  const auto qc = query_caption(query, video);
  if (!qc) return qv;
  return qv + static_cast<float>(fusion_.alpha) * *qc;
}

Tensor<float> Scorer::matrix(bool fuse) const {
  const std::size_t n = size();
  auto out = Tensor<float>::zeros(n, n);
  parallel_for(n, threads_, [&](std::size_t i) {
    auto row = out.row(i);
    for (std::size_t j = 0; j < n; ++j) row[j] = fuse ? fused(i, j) : query_video(i, j);
  });
  return out;
}

Tensor<float> Scorer::score_matrix() const { return matrix(true); }
Tensor<float> Scorer::query_video_matrix() const { return matrix(false); }

RetrievalReport Scorer::rank_all(Direction direction) const {
  const auto scores = score_matrix();
  return report_from_scores(direction == Direction::kTextToVideo ? scores : k::transpose(scores),
                            direction);
}

std::vector<std::pair<std::string, float>> Scorer::retrieve_topk(std::size_t query,
                                                                 std::size_t k) const {
  if (k == 0) fail(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (query >= size()) fail(ErrorCode::kInvalidArgument, "query index out of range");
  std::vector<std::pair<std::string, float>> all;
  all.reserve(size());
  for (std::size_t j = 0; j < size(); ++j) all.emplace_back(archive_->videos()[j].id, fused(query, j));
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

namespace {

std::string fixed4(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

std::string json_line(const RetrievalReport& r, bool include_ranks) {
  std::string s = "{\"direction\": \"";
  s += to_string(r.direction);
  s += "\", \"mdr\": " + fixed4(r.mdr);
  s += ", \"mnr\": " + fixed4(r.mnr);
  s += ", \"n\": " + std::to_string(r.n());
  s += ", \"r1\": " + fixed4(r.r1);
  s += ", \"r10\": " + fixed4(r.r10);
  s += ", \"r5\": " + fixed4(r.r5);
  if (include_ranks) {
    s += ", \"ranks\": [";
    for (std::size_t i = 0; i < r.ranks.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(r.ranks[i]);
    }
    s += "]";
  }
  s += "}";
  return s;
}

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace

std::string emit_reports(const std::vector<RetrievalReport>& reports, ReportFormat format,
                         bool include_ranks) {
  std::string out;
  if (format == ReportFormat::kJson) {
    for (const auto& r : reports) out += json_line(r, include_ranks) + "\n";
    return out;
  }
  constexpr std::size_t kWidth = 10;
  out = "direction";
  for (const char* h : {"R@1", "R@5", "R@10", "MdR", "MnR"}) out += pad_left(h, kWidth);
  out += "\n";
  for (const auto& r : reports) {
    std::string line = to_string(r.direction);
    line.resize(9, ' ');
    for (double v : {r.r1, r.r5, r.r10, r.mdr, r.mnr}) line += pad_left(fixed4(v), kWidth);
    out += line + "\n";
  }
  return out;
}

std::string emit_report(const RetrievalReport& report, ReportFormat format, bool include_ranks) {
  return emit_reports({report}, format, include_ranks);
}

std::vector<RetrievalReport> evaluate(const ModelConfig& config, const ParamSet<float>& params,
                                      const EmbeddingArchive& archive, FusionConfig fusion,
                                      std::size_t threads) {
  const Scorer scorer(config, params, archive, fusion, threads);
  const auto scores = scorer.score_matrix();
  return {report_from_scores(scores, Direction::kTextToVideo),
          report_from_scores(k::transpose(scores), Direction::kVideoToText)};
}

}  // namespace capmatch
