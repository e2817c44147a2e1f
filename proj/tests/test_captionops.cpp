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

#include "capmatch/error.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_util.hpp"

using namespace capmatch;
using testutil::make;

namespace {

// Query e1 against captions whose first coordinate is the wanted similarity.
EmbeddingArchive with_query_sims(const std::vector<std::vector<float>>& sims, Split split = Split::kTrain) {
  std::vector<QueryItem> qs;
  std::vector<VideoItem> vs;
  for (std::size_t i = 0; i < sims.size(); ++i) {
    const std::string id = "v" + std::to_string(i);
    qs.push_back({id, make<float>(1, 2, {1, 0}), make<float>(1, 2, {1, 0})});
    Tensor<float> caps({sims[i].size(), 2});
    for (std::size_t k = 0; k < sims[i].size(); ++k) {
      caps(k, 0) = sims[i][k];
      caps(k, 1) = std::sqrt(1.0f - sims[i][k] * sims[i][k]);
    }
    vs.push_back({id, make<float>(1, 2, {0, 1}), caps, std::nullopt});
  }
  return EmbeddingArchive::from_raw(2, split, qs, vs);
}

double cosine(const Tensor<float>& a, const Tensor<float>& b, std::size_t row) {
  double s = 0;
  for (std::size_t d = 0; d < a.cols(); ++d) s += double(a(0, d)) * b(row, d);
  return s;
}

}  // namespace

TEST_CASE("filter_captions picks the most similar caption") {
  const auto a = with_query_sims({{0.2f, 0.9f, 0.5f}});
  CHECK(filter_captions(a, 1).selected[0] == std::vector<std::size_t>{1});
}

TEST_CASE("filter_captions breaks ties by lowest index") {
  const auto a = with_query_sims({{0.5f, 0.5f, 0.1f}});
  CHECK(filter_captions(a, 1).selected[0] == std::vector<std::size_t>{0});
  CHECK(filter_captions(a, 3).selected[0] == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("filter_captions agrees with a full sort") {
  Rng rng(21);
  const std::size_t d = 16, c = 30;
  for (int trial = 0; trial < 5; ++trial) {
    const auto q = testutil::random_unit_rows<float>(rng, 1, d);
    const auto caps = testutil::random_tensor<float>(rng, c, d);
    const auto a = EmbeddingArchive::from_raw(
        d, Split::kTrain, {{"x", q, q}}, {{"x", testutil::random_tensor<float>(rng, 2, d), caps, std::nullopt}});
    const auto& nc = a.videos()[0].captions;
    std::vector<std::size_t> order(c);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> sims(c);
    for (std::size_t k = 0; k < c; ++k) sims[k] = cosine(a.queries()[0].global, nc, k);
    std::stable_sort(order.begin(), order.end(), [&](auto l, auto r) { return sims[l] > sims[r]; });
    order.resize(3);
    CHECK(filter_captions(a, 3).selected[0] == order);
  }
}

TEST_CASE("filter_captions selection properties") {
  const auto a = synthesize([] {
    SynthConfig c;
    c.n = 10;
    c.dim = 8;
    c.captions = 6;
    c.sigma_c = 0.8;
    return c;
  }());
  const auto all = filter_captions(a, 6);
  const auto top2 = filter_captions(a, 2);
  CHECK(all.archive_fingerprint == a.fingerprint());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& caps = a.videos()[i].captions;
    const auto& q = a.queries()[i].global;
    auto sorted = all.selected[i];
    CHECK(sorted.size() == 6);
    for (std::size_t k = 1; k < sorted.size(); ++k) CHECK(cosine(q, caps, sorted[k - 1]) >= cosine(q, caps, sorted[k]));
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
    const auto& chosen = top2.selected[i];
    for (std::size_t k = 0; k < 6; ++k) {
      if (std::find(chosen.begin(), chosen.end(), k) != chosen.end()) continue;
      for (auto s : chosen) CHECK(cosine(q, caps, s) >= cosine(q, caps, k));
    }
  }
  CHECK(filter_captions(a, 2).selected == top2.selected);
}

TEST_CASE("filter_captions is train-only and needs k >= 1") {
  const auto val = with_query_sims({{0.5f}}, Split::kVal);
  try {
    filter_captions(val, 1);
    FAIL("expected SplitMisuse");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSplitMisuse);
  }
  CHECK_THROWS_AS(filter_captions(with_query_sims({{0.5f}}), 0), Error);
}

TEST_CASE("augmentation pair counts") {
  const auto three = with_query_sims({{0.1f, 0.3f}, {0.4f}, {0.2f, 0.6f, 0.7f}});
  const auto pairs = build_augmentation_pairs(three, filter_captions(three, 1));
  REQUIRE(pairs.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(pairs[i].video_index == i);
  CHECK(pairs[0].caption_index == 1);
  CHECK(pairs[2].caption_index == 2);
  CHECK(pairs[2].caption(0, 0) == doctest::Approx(0.7));

  const auto clamp = build_augmentation_pairs(three, filter_captions(three, 3));
  CHECK(clamp.size() == 6);
  CHECK(clamp[0].caption_index == 1);
  CHECK(clamp[1].caption_index == 0);

  std::vector<QueryItem> qs = three.raw_queries();
  std::vector<VideoItem> vs = three.raw_videos();
  vs[1].captions = Tensor<float>({0, 2});
  const auto missing = EmbeddingArchive::from_raw(2, Split::kTrain, qs, vs);
  const auto f = filter_captions(missing, 1);
  CHECK(f.selected[1].empty());
  CHECK(build_augmentation_pairs(missing, f).size() == 2);
}

TEST_CASE("augmentation pairs must come from the same archive") {
  const auto a = with_query_sims({{0.1f}, {0.2f}});
  const auto b = with_query_sims({{0.1f}, {0.2f}, {0.3f}});
  try {
    build_augmentation_pairs(b, filter_captions(a, 1));
    FAIL("expected ArchiveMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kArchiveMismatch);
  }
}

TEST_CASE("filtered captions serialize by video id") {
  const auto a = with_query_sims({{0.2f, 0.9f}, {0.8f, 0.1f}});
  const auto j = nlohmann::json::parse(filter_captions(a, 1).to_json(a));
  CHECK(j["v0"] == nlohmann::json::array({1}));
  CHECK(j["v1"] == nlohmann::json::array({0}));
}
