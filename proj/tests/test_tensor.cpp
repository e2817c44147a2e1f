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

#include "capmatch/tensor.hpp"

#include <cmath>

#include "capmatch/error.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace capmatch;
using testutil::make;
using testutil::max_abs_diff;
using testutil::random_tensor;

TEST_CASE("l2_normalize examples") {
  const auto a = l2_normalize(make<float>(1, 2, {3, 4}));
  CHECK(a(0, 0) == doctest::Approx(0.6).epsilon(1e-7));
  CHECK(a(0, 1) == doctest::Approx(0.8).epsilon(1e-7));

  const auto b = l2_normalize(make<float>(2, 2, {1, 0, 0, 2}));
  CHECK(b.bitwise_equal(make<float>(2, 2, {1, 0, 0, 1})));
}

TEST_CASE("l2_normalize is idempotent and scale invariant") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_tensor(rng, 5, 8);
    const auto n = l2_normalize(x);
    CHECK(max_abs_diff(l2_normalize(n), n) < 1e-6);
    CHECK(max_abs_diff(l2_normalize(kernels::scale(x, 7.5f)), n) < 1e-6);
    for (std::size_t r = 0; r < n.rows(); ++r) {
      double s = 0;
      for (float v : n.row(r)) s += double(v) * v;
      CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("l2_normalize rejects zero rows") {
  auto x = make<float>(2, 3, {1, 2, 3, 0, 0, 0});
  try {
    l2_normalize(x);
    FAIL("expected ZeroNormRow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kZeroNormRow);
  }
  CHECK_THROWS_AS(l2_normalize(make<float>(1, 2, {1e-13f, 0})), Error);
}

TEST_CASE("softmax_rows examples") {
  const auto u = softmax_rows(make<double>(1, 3, {0, 0, 0}));
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  const auto s = softmax_rows(make<double>(1, 2, {1000, 0}));
  CHECK(std::fabs(s(0, 0) - 1.0) <= 1e-12);
  CHECK(std::fabs(s(0, 1)) <= 1e-12);

  const auto t = softmax_rows(make<double>(1, 2, {1, 2}));
  CHECK(t(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-12));
  CHECK(t(0, 0) == doctest::Approx(0.26894).epsilon(1e-5));
  CHECK(t(0, 1) == doctest::Approx(0.73106).epsilon(1e-5));
}

TEST_CASE("softmax_rows rows sum to one and ignore per-row shifts") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor(rng, 4, 6, 3.0);
    const auto s = softmax_rows(x);
    auto shifted = x;
    for (std::size_t r = 0; r < 4; ++r)
      for (auto& v : shifted.row(r)) v += static_cast<float>(r) * 11.0f - 7.0f;
    CHECK(max_abs_diff(softmax_rows(shifted), s) < 1e-6);
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0;
      for (float v : s.row(r)) {
        CHECK(v >= 0.0f);
        sum += v;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("layer_norm examples") {
  const auto ones = make<double>(1, 2, {1, 1});
  const auto zeros = make<double>(1, 2, {0, 0});
  CHECK(layer_norm(make<double>(1, 2, {1, 1}), ones, zeros).bitwise_equal(zeros));

  const auto y = layer_norm(make<double>(1, 2, {1, -1}), ones, zeros);
  CHECK(y(0, 0) == doctest::Approx(1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));
  CHECK(y(0, 1) == doctest::Approx(-1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));

  Rng rng(1);
  const auto x = random_tensor<double>(rng, 1, 2);
  const auto z = layer_norm(x, zeros, make<double>(1, 2, {5, 5}));
  CHECK(z.bitwise_equal(make<double>(1, 2, {5, 5})));
}

TEST_CASE("layer_norm rows have zero mean and unit variance") {
  Rng rng(2);
  const std::size_t d = 16;
  const auto x = random_tensor<double>(rng, 6, d, 4.0);
  const auto y = layer_norm(x, Tensor<double>({1, d}, 1.0), Tensor<double>({1, d}, 0.0));
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double mean = 0, var = 0;
    for (double v : y.row(r)) mean += v;
    mean /= d;
    for (double v : y.row(r)) var += (v - mean) * (v - mean);
    var /= d;
    CHECK(std::fabs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("matmul variants agree with a triple loop") {
  Rng rng(4);
  for (auto [m, k, n] : {std::tuple{1, 1, 1}, std::tuple{3, 5, 2}, std::tuple{7, 4, 6}}) {
    const auto a = random_tensor<double>(rng, m, k);
    const auto b = random_tensor<double>(rng, k, n);
    Tensor<double> ref({std::size_t(m), std::size_t(n)});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double s = 0;
        for (int p = 0; p < k; ++p) s += a(i, p) * b(p, j);
        ref(i, j) = s;
      }
    CHECK(max_abs_diff(kernels::matmul(a, b), ref) < 1e-12);
    CHECK(max_abs_diff(kernels::matmul_nt(a, kernels::transpose(b)), ref) < 1e-12);
    CHECK(max_abs_diff(kernels::matmul_tn(kernels::transpose(a), b), ref) < 1e-12);
  }
  CHECK_THROWS_AS(kernels::matmul(Tensor<float>({2, 3}), Tensor<float>({2, 3})), Error);
}

TEST_CASE("gelu uses the tanh approximation") {
  const auto y = kernels::gelu(make<double>(1, 3, {0, 1, -2}));
  auto ref = [](double x) {
    return 0.5 * x * (1 + std::tanh(std::sqrt(2 / M_PI) * (x + 0.044715 * x * x * x)));
  };
  CHECK(y(0, 0) == 0.0);
  CHECK(y(0, 1) == doctest::Approx(ref(1)).epsilon(1e-14));
  CHECK(y(0, 2) == doctest::Approx(ref(-2)).epsilon(1e-14));
  CHECK(y(0, 1) == doctest::Approx(0.8411919906).epsilon(1e-9));
}

TEST_CASE("row_max breaks ties by first index") {
  std::vector<std::size_t> arg;
  const auto m = kernels::row_max(make<float>(2, 3, {1, 3, 3, -1, -1, -2}), &arg);
  CHECK(m.bitwise_equal(make<float>(2, 1, {3, -1})));
  CHECK(arg == std::vector<std::size_t>{1, 0});
}

TEST_CASE("log_softmax matches log of softmax") {
  Rng rng(8);
  const auto x = random_tensor<double>(rng, 3, 5, 2.0);
  const auto s = kernels::softmax_rows(x);
  const auto l = kernels::log_softmax_rows(x);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(l[i] == doctest::Approx(std::log(s[i])).epsilon(1e-12));
}

TEST_CASE("slicing, concatenation and diag") {
  const auto a = make<float>(2, 2, {1, 2, 3, 4});
  const auto b = make<float>(1, 2, {5, 6});
  const Tensor<float>* rows[] = {&a, &b};
  const auto r = kernels::concat_rows<float>(rows);
  CHECK(r.bitwise_equal(make<float>(3, 2, {1, 2, 3, 4, 5, 6})));
  CHECK(kernels::slice_rows(r, 1, 2).bitwise_equal(make<float>(2, 2, {3, 4, 5, 6})));
  const Tensor<float>* cols[] = {&a, &a};
  const auto c = kernels::concat_cols<float>(cols);
  CHECK(c.bitwise_equal(make<float>(2, 4, {1, 2, 1, 2, 3, 4, 3, 4})));
  CHECK(kernels::slice_cols(c, 1, 2).bitwise_equal(make<float>(2, 2, {2, 1, 4, 3})));
  CHECK(kernels::diag(a).bitwise_equal(make<float>(2, 1, {1, 4})));
  try {
    kernels::diag(r);
    FAIL("expected NonSquare");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonSquare);
  }
}

TEST_CASE("zero extents and invariants") {
  const Tensor<float> empty({0, 4});
  CHECK(empty.size() == 0);
  CHECK(empty.rows() == 0);
  CHECK(empty.cols() == 4);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), Error);
  auto t = make<float>(1, 2, {1, std::nanf("")});
  CHECK_FALSE(t.all_finite());
  CHECK(Tensor<float>::scalar(2.5f).item() == 2.5f);
  CHECK_THROWS_AS(Tensor<float>({2, 1}).item(), Error);
}

TEST_CASE("kernels are deterministic") {
  Rng a(11), b(11);
  const auto x = random_tensor(a, 9, 7), y = random_tensor(b, 9, 7);
  CHECK(kernels::matmul_nt(x, x).bitwise_equal(kernels::matmul_nt(y, y)));
  CHECK(softmax_rows(x).bitwise_equal(softmax_rows(y)));
}
