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

#include "capmatch/interaction.hpp"

#include <cmath>

#include "capmatch/captionbranch.hpp"
#include "capmatch/error.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace capmatch;
using testutil::make;
using testutil::random_tensor;
using testutil::random_unit_rows;
using M = Tensor<double>;

namespace {

ModelConfig config_for(Strategy s, std::size_t dim = 8) {
  ModelConfig c;
  c.dim = dim;
  c.interaction.strategy = s;
  c.interaction.layers = 1;
  c.interaction.ffn_mult = 2;
  c.interaction.max_frames = 6;
  c.caption_layers = 2;
  return c;
}

ParamSet<double> fresh(const ModelConfig& c, std::uint64_t seed = 5) {
  return cast_params<float, double>(init_params(c, seed));
}

M enhance(const ModelConfig& c, const ParamSet<double>& params, const M& frames, const M& captions) {
  ad::Tape<double> tape(false);
  const Bound<double> p(tape, params, {});
  return enhance_frames(tape.constant(frames), tape.constant(captions), p, c).value();
}

M aggregate(const ModelConfig& c, const ParamSet<double>& params, const M& captions) {
  ad::Tape<double> tape(false);
  const Bound<double> p(tape, params, {});
  return aggregate_captions(tape.constant(captions), p, c).value();
}

M reversed_rows(const M& t) {
  M out({t.rows(), t.cols()});
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) out(r, c) = t(t.rows() - 1 - r, c);
  return out;
}

ErrorCode error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kInternal;
}

// Independent plain-loop evaluation of one pre-norm encoder block.
namespace ref {

M matmul(const M& a, const M& b) {
  M out({a.rows(), b.cols()}, 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

M affine(const M& x, const M& w, const M& b) {
  M y = matmul(x, w);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += b(0, j);
  return y;
}

M norm(const M& x, const M& g, const M& b) {
  M y({x.rows(), x.cols()});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double mean = 0, var = 0;
    for (std::size_t j = 0; j < x.cols(); ++j) mean += x(i, j);
    mean /= double(x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= double(x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) y(i, j) = (x(i, j) - mean) / std::sqrt(var + 1e-5) * g(0, j) + b(0, j);
  }
  return y;
}

M gelu(M x) {
  for (auto& v : x.data()) v = 0.5 * v * (1 + std::tanh(std::sqrt(2 / M_PI) * (v + 0.044715 * v * v * v)));
  return x;
}

M add(M a, const M& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
  return a;
}

M attention(const ParamSet<double>& p, const std::string& pre, const M& q_in, const M& kv_in, std::size_t heads) {
  const std::string a = pre + ".attn.";
  const M q = affine(q_in, p.at(a + "wq"), p.at(a + "bq"));
  const M k = affine(kv_in, p.at(a + "wk"), p.at(a + "bk"));
  const M v = affine(kv_in, p.at(a + "wv"), p.at(a + "bv"));
  const std::size_t d = q.cols(), dh = d / heads;
  M merged({q.rows(), d}, 0.0);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < q.rows(); ++i) {
      std::vector<double> logits(k.rows());
      double top = -1e300;
      for (std::size_t j = 0; j < k.rows(); ++j) {
        double s = 0;
        for (std::size_t t = 0; t < dh; ++t) s += q(i, h * dh + t) * k(j, h * dh + t);
        logits[j] = s / std::sqrt(double(dh));
        top = std::max(top, logits[j]);
      }
      double z = 0;
      for (auto& l : logits) z += (l = std::exp(l - top));
      for (std::size_t j = 0; j < k.rows(); ++j)
        for (std::size_t t = 0; t < dh; ++t) merged(i, h * dh + t) += logits[j] / z * v(j, h * dh + t);
    }
  return affine(merged, p.at(a + "wo"), p.at(a + "bo"));
}

M ffn(const ParamSet<double>& p, const std::string& pre, const M& x) {
  const std::string f = pre + ".ffn.";
  return affine(gelu(affine(x, p.at(f + "w1"), p.at(f + "b1"))), p.at(f + "w2"), p.at(f + "b2"));
}

M block(const ParamSet<double>& p, const std::string& pre, const M& x, std::size_t heads) {
  const M n1 = norm(x, p.at(pre + ".ln1.g"), p.at(pre + ".ln1.b"));
  const M h = add(x, attention(p, pre, n1, n1, heads));
  return add(h, ffn(p, pre, norm(h, p.at(pre + ".ln2.g"), p.at(pre + ".ln2.b"))));
}

}  // namespace ref

}  // namespace

TEST_CASE("sum interaction examples") {
  const auto c = config_for(Strategy::kSum, 2);
  const ParamSet<double> none;
  CHECK(enhance(c, none, make<double>(1, 2, {1, 0}), make<double>(2, 2, {0, 1, 0, 1}))
            .bitwise_equal(make<double>(1, 2, {1, 1})));
  const auto frames = make<double>(2, 2, {1, 2, 3, 4});
  CHECK(enhance(c, none, frames, make<double>(1, 2, {0.5, -1})).bitwise_equal(make<double>(2, 2, {1.5, 1, 3.5, 3})));
  Rng rng(41);
  const auto caps = random_tensor<double>(rng, 4, 2);
  CHECK(testutil::max_abs_diff(enhance(c, none, frames, caps), enhance(c, none, frames, reversed_rows(caps))) < 1e-12);
}

TEST_CASE("mlp interaction examples") {
  const std::size_t d = 4;
  const auto c = config_for(Strategy::kMlp, d);
  auto p = fresh(c);
  for (const char* n : {"mlp.w1", "mlp.b1", "mlp.w2", "mlp.b2"})
    for (auto& x : p.at(n).data()) x = 0;
  Rng rng(42);
  const auto frames = random_tensor<double>(rng, 3, d, 10.0);
  const auto caps = random_tensor<double>(rng, 2, d);
  CHECK(enhance(c, p, frames, caps).bitwise_equal(M({3, d}, 0.0)));

  // [I | 0] then I passes large positive frames through the GELU unchanged.
  for (std::size_t i = 0; i < d; ++i) {
    p.at("mlp.w1")(i, i) = 1;
    p.at("mlp.w2")(i, i) = 1;
  }
  M positive({3, d});
  for (auto& x : positive.data()) x = 10 + 10 * rng.uniform();
  CHECK(testutil::max_abs_diff(enhance(c, p, positive, caps), positive) < 1e-9);

  auto random_p = testutil::randomized(fresh(c), rng);
  CHECK(testutil::max_abs_diff(enhance(c, random_p, frames, caps), enhance(c, random_p, frames, reversed_rows(caps))) <
        1e-12);
  CHECK(testutil::param_gradcheck(random_p, [&](const Bound<double>& b) {
          return testutil::weighted_sum(interact_mlp(b.tape().constant(frames), b.tape().constant(caps), b));
        }) < 1e-6);
}

TEST_CASE("transformer strategies are exact identities at initialization") {
  Rng rng(43);
  const auto frames = random_unit_rows<double>(rng, 4, 8);
  const auto caps = random_unit_rows<double>(rng, 3, 8);
  for (auto s : {Strategy::kCross, Strategy::kCoAttn}) {
    for (std::size_t layers : {1, 3}) {
      auto c = config_for(s);
      c.interaction.layers = layers;
      const auto p = fresh(c);
      CHECK(enhance(c, p, frames, caps).bitwise_equal(frames));
      CHECK(enhance(c, p, frames, reversed_rows(caps)).bitwise_equal(frames));
      CHECK(enhance(c, p, reversed_rows(frames), caps).bitwise_equal(reversed_rows(frames)));
    }
  }
}

TEST_CASE("cross transformer matches a plain-loop reference") {
  Rng rng(44);
  const auto c = config_for(Strategy::kCross);
  const auto p = testutil::randomized(fresh(c), rng);
  const auto frames = random_unit_rows<double>(rng, 2, 8);
  const auto caps = random_unit_rows<double>(rng, 3, 8);
  M seq({5, 8});
  for (std::size_t j = 0; j < 8; ++j) {
    for (std::size_t i = 0; i < 2; ++i) seq(i, j) = frames(i, j) + p.at("cross.type")(0, j);
    for (std::size_t i = 0; i < 3; ++i) seq(2 + i, j) = caps(i, j) + p.at("cross.type")(1, j);
  }
  const M expect = kernels::slice_rows(ref::block(p, "cross.block0", seq, c.heads()), 0, 2);
  CHECK(testutil::max_abs_diff(enhance(c, p, frames, caps), expect) < 1e-5);
}

TEST_CASE("co-attention matches a plain-loop reference and finite differences") {
  Rng rng(45);
  const auto c = config_for(Strategy::kCoAttn);
  const auto p = testutil::randomized(fresh(c), rng);
  const auto frames = random_unit_rows<double>(rng, 3, 8);
  const auto caps = random_unit_rows<double>(rng, 4, 8);

  const std::string v = "coattn.co.v", k = "coattn.co.c";
  const M vn = ref::norm(frames, p.at(v + ".ln1.g"), p.at(v + ".ln1.b"));
  const M cn = ref::norm(caps, p.at(k + ".ln1.g"), p.at(k + ".ln1.b"));
  const M v1 = ref::add(frames, ref::attention(p, v, vn, cn, c.heads()));
  const M v2 = ref::add(v1, ref::ffn(p, v, ref::norm(v1, p.at(v + ".ln2.g"), p.at(v + ".ln2.b"))));
  const M expect = ref::block(p, "coattn.temporal0", ref::add(v2, kernels::slice_rows(p.at("coattn.pos"), 0, 3)),
                              c.heads());
  CHECK(testutil::max_abs_diff(enhance(c, p, frames, caps), expect) < 1e-5);

  CHECK(testutil::param_gradcheck(p, [&](const Bound<double>& b) {
          return testutil::weighted_sum(interact_coattn(b.tape().constant(frames), b.tape().constant(caps), b, c));
        }, 1e-5) < 1e-6);
}

TEST_CASE("shape contract and caption-free routing") {
  Rng rng(46);
  for (auto s : {Strategy::kNone, Strategy::kSum, Strategy::kMlp, Strategy::kCross, Strategy::kCoAttn}) {
    const auto c = config_for(s);
    const auto p = testutil::randomized(fresh(c), rng);
    for (std::size_t f : {1, 3, 6})
      for (std::size_t n : {1, 5}) {
        const auto out = enhance(c, p, random_unit_rows<double>(rng, f, 8), random_unit_rows<double>(rng, n, 8));
        CHECK(out.rows() == f);
        CHECK(out.cols() == 8);
      }
    const auto frames = random_unit_rows<double>(rng, 2, 8);
    CHECK(enhance(c, p, frames, M({0, 8})).bitwise_equal(frames));
  }
}

TEST_CASE("interaction errors") {
  Rng rng(47);
  ad::Tape<double> tape(false);
  const auto frames = tape.constant(random_unit_rows<double>(rng, 2, 8));
  const auto empty = tape.constant(M({0, 8}));
  const auto caps = tape.constant(random_unit_rows<double>(rng, 2, 8));
  const auto cross = config_for(Strategy::kCross);
  const auto co = config_for(Strategy::kCoAttn);
  const auto mlp = config_for(Strategy::kMlp);
  const auto pc = fresh(cross), pco = fresh(co), pm = fresh(mlp);
  const Bound<double> bc(tape, pc, {}), bco(tape, pco, {}), bm(tape, pm, {});
  CHECK(error_of([&] { interact_sum(frames, empty); }) == ErrorCode::kNoCaptions);
  CHECK(error_of([&] { interact_mlp(frames, empty, bm); }) == ErrorCode::kNoCaptions);
  CHECK(error_of([&] { interact_cross(frames, empty, bc, cross); }) == ErrorCode::kNoCaptions);
  CHECK(error_of([&] { interact_coattn(frames, empty, bco, co); }) == ErrorCode::kNoCaptions);
  const auto long_frames = tape.constant(random_unit_rows<double>(rng, 7, 8));
  CHECK(error_of([&] { interact_cross(long_frames, caps, bc, cross); }) == ErrorCode::kSequenceTooLong);
  CHECK(error_of([&] { interact_coattn(long_frames, caps, bco, co); }) == ErrorCode::kSequenceTooLong);
}

TEST_CASE("caption aggregation examples") {
  auto c = config_for(Strategy::kNone, 2);
  c.caption_layers = 0;
  const ParamSet<double> none;
  const auto g = aggregate(c, none, make<double>(2, 2, {1, 0, 0, 1}));
  CHECK(g(0, 0) == doctest::Approx(0.70711).epsilon(1e-5));
  CHECK(g(0, 1) == doctest::Approx(0.70711).epsilon(1e-5));
  const auto lone = make<double>(1, 2, {0.6, 0.8});
  CHECK(testutil::max_abs_diff(aggregate(c, none, lone), lone) < 1e-15);

  ad::Tape<double> tape(false);
  const Bound<double> b(tape, none, {});
  CHECK(query_caption_similarity(tape.constant(lone), tape.constant(lone), b, c).value().item() ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(query_caption_similarity(tape.constant(make<double>(1, 2, {1, 0})),
                                 tape.constant(make<double>(3, 2, {0, 1, 0, 2, 0, 1})), b, c)
            .value()
            .item() == 0.0);
  CHECK(error_of([&] { aggregate_captions(tape.constant(M({0, 2})), b, c); }) == ErrorCode::kNoCaptions);
}

TEST_CASE("caption aggregation oracle and invariants") {
  Rng rng(48);
  auto flat = config_for(Strategy::kNone);
  flat.caption_layers = 0;
  const auto deep = config_for(Strategy::kNone);
  const ParamSet<double> none;
  const auto init = fresh(deep);
  const auto trained = testutil::randomized(fresh(deep), rng);
  for (int trial = 0; trial < 10; ++trial) {
    const auto caps = random_unit_rows<double>(rng, 5, 8);
    const auto q = random_unit_rows<double>(rng, 1, 8);
    M mean({1, 8}, 0.0);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 8; ++j) mean(0, j) += caps(i, j) / 5;
    double dot = 0, nq = 0, nm = 0;
    for (std::size_t j = 0; j < 8; ++j) {
      dot += q(0, j) * mean(0, j);
      nq += q(0, j) * q(0, j);
      nm += mean(0, j) * mean(0, j);
    }
    ad::Tape<double> tape(false);
    const Bound<double> b(tape, none, {});
    CHECK(std::fabs(query_caption_similarity(tape.constant(q), tape.constant(caps), b, flat).value().item() -
                    dot / std::sqrt(nq * nm)) < 1e-6);

    CHECK(aggregate(deep, init, caps).bitwise_equal(aggregate(flat, none, caps)));
    const auto out = aggregate(deep, trained, caps);
    CHECK(testutil::max_abs_diff(out, aggregate(deep, trained, reversed_rows(caps))) < 1e-12);
    double norm = 0;
    for (double x : out.data()) norm += x * x;
    CHECK(std::fabs(std::sqrt(norm) - 1) < 1e-5);
  }
  const auto caps = random_unit_rows<double>(rng, 3, 8);
  CHECK(testutil::param_gradcheck(trained, [&](const Bound<double>& b) {
          return testutil::weighted_sum(aggregate_captions(b.tape().constant(caps), b, deep));
        }) < 1e-6);
}
