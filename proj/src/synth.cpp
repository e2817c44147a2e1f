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

#include <cmath>
#include <iomanip>
#include <sstream>

#include "capmatch/archive.hpp"
#include "capmatch/rng.hpp"

namespace capmatch {

namespace {

std::vector<float> unit_gaussian(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double sq = 0;
  for (auto& x : v) {
    x = rng.normal();
    sq += x * x;
  }
  const double norm = std::sqrt(sq);
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

// base + sigma * eps / sqrt(D), eps ~ N(0, I).
std::vector<float> jitter(Rng& rng, const std::vector<float>& base, double sigma) {
  const double s = sigma / std::sqrt(static_cast<double>(base.size()));
  std::vector<float> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    out[i] = static_cast<float>(static_cast<double>(base[i]) + s * rng.normal());
  }
  return out;
}

void put_row(Tensor<float>& t, std::size_t r, const std::vector<float>& v) {
  std::copy(v.begin(), v.end(), t.row(r).begin());
}

}  // namespace

EmbeddingArchive synthesize(const SynthConfig& c) {
  if (c.n < 1 || c.dim < 4 || c.frames < 1 || c.captions < 1 || c.words < 1) {
    fail(ErrorCode::kInvalidConfig, "synthesize needs n>=1, dim>=4, frames>=1, captions>=1, words>=1");
  }
  if (!(c.distractor_fraction >= 0.0 && c.distractor_fraction <= 1.0)) {
    fail(ErrorCode::kInvalidConfig, "distractor_fraction must lie in [0, 1]");
  }
  for (double s : {c.sigma_q, c.sigma_v, c.sigma_c, c.sigma_w}) {
    if (!(s >= 0.0) || !std::isfinite(s)) fail(ErrorCode::kInvalidConfig, "noise levels must be finite and >= 0");
  }

  Rng rng(c.seed);
  std::vector<std::vector<float>> latents;
  latents.reserve(c.n);
  for (std::size_t i = 0; i < c.n; ++i) latents.push_back(unit_gaussian(rng, c.dim));

  std::vector<QueryItem> queries;
  std::vector<VideoItem> videos;
  const int width = c.n > 1 ? static_cast<int>(std::to_string(c.n - 1).size()) : 1;
  for (std::size_t i = 0; i < c.n; ++i) {
    std::ostringstream id;
    id << "item" << std::setw(width) << std::setfill('0') << i;

    QueryItem q{id.str(), Tensor<float>::zeros(c.words, c.dim), Tensor<float>::zeros(1, c.dim)};
    const std::vector<float> query = jitter(rng, latents[i], c.sigma_q);
    put_row(q.global, 0, query);
    for (std::size_t w = 0; w < c.words; ++w) put_row(q.words, w, jitter(rng, query, c.sigma_w));

    VideoItem v{id.str(), Tensor<float>::zeros(c.frames, c.dim),
                Tensor<float>::zeros(c.captions, c.dim), std::nullopt};
    for (std::size_t f = 0; f < c.frames; ++f) put_row(v.frames, f, jitter(rng, latents[i], c.sigma_v));
    std::vector<std::string> texts;
    for (std::size_t k = 0; k < c.captions; ++k) {
      std::size_t source = i;
      // The Bernoulli draw is made for every caption so that changing the
      // fraction does not shift the rest of the random stream.
      const bool distractor = rng.uniform() < c.distractor_fraction;
      const std::size_t other = c.n > 1 ? rng.below(c.n - 1) : 0;
      if (distractor && c.n > 1) source = other >= i ? other + 1 : other;
      put_row(v.captions, k, jitter(rng, latents[source], c.sigma_c));
      texts.push_back("synthetic caption " + std::to_string(k) + " of " + id.str() +
                      (source == i ? "" : " (distractor)"));
    }
    if (c.caption_text) v.caption_texts = std::move(texts);
    queries.push_back(std::move(q));
    videos.push_back(std::move(v));
  }
  return EmbeddingArchive::from_raw(c.dim, c.split, std::move(queries), std::move(videos),
                                    std::max(EmbeddingArchive::kDefaultMaxWords, c.words));
}

}  // namespace capmatch
