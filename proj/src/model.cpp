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

#include "capmatch/model.hpp"

#include <cmath>

#include "capmatch/rng.hpp"

namespace capmatch {

const char* to_string(MatchMode mode) noexcept {
  return mode == MatchMode::kGlobal ? "global" : "finegrained";
}

const char* to_string(Pooling pooling) noexcept {
  return pooling == Pooling::kUniform ? "uniform" : "learned";
}

const char* to_string(Strategy strategy) noexcept {
  switch (strategy) {
    case Strategy::kNone: return "none";
    case Strategy::kSum: return "sum";
    case Strategy::kMlp: return "mlp";
    case Strategy::kCross: return "cross";
    case Strategy::kCoAttn: return "coattn";
  }
  return "none";
}

MatchMode parse_match_mode(const std::string& s) {
  if (s == "global") return MatchMode::kGlobal;
  if (s == "finegrained" || s == "fine-grained") return MatchMode::kFineGrained;
  fail(ErrorCode::kInvalidConfig, "unknown match mode '" + s + "' (global|finegrained)");
}

Pooling parse_pooling(const std::string& s) {
  if (s == "uniform") return Pooling::kUniform;
  if (s == "learned") return Pooling::kLearnedWeighted;
  fail(ErrorCode::kInvalidConfig, "unknown pooling '" + s + "' (uniform|learned)");
}

Strategy parse_strategy(const std::string& s) {
  if (s == "none") return Strategy::kNone;
  if (s == "sum") return Strategy::kSum;
  if (s == "mlp") return Strategy::kMlp;
  if (s == "cross") return Strategy::kCross;
  if (s == "coattn") return Strategy::kCoAttn;
  fail(ErrorCode::kInvalidConfig, "unknown interaction '" + s + "' (none|sum|mlp|cross|coattn)");
}

std::size_t ModelConfig::heads() const noexcept {
  if (interaction.heads != 0) return interaction.heads;
  return dim >= 512 ? 8 : 4;
}

void ModelConfig::validate() const {
  if (dim < 2) fail(ErrorCode::kInvalidConfig, "dim must be at least 2");
  const bool transformer = interaction.strategy == Strategy::kCross ||
                           interaction.strategy == Strategy::kCoAttn;
  if (transformer || caption_layers > 0) {
    if (heads() == 0 || dim % heads() != 0) {
      fail(ErrorCode::kInvalidConfig, "dim " + std::to_string(dim) + " is not divisible by " +
                                          std::to_string(heads()) + " heads");
    }
    if (interaction.ffn_mult < 1) fail(ErrorCode::kInvalidConfig, "ffn_mult must be positive");
  }
  if (transformer && interaction.layers < 1) {
    fail(ErrorCode::kInvalidConfig, "transformer interaction needs layers >= 1");
  }
  if (interaction.max_frames < 1) fail(ErrorCode::kInvalidConfig, "max_frames must be positive");
  if (!(tau_min > 0.0) || !(tau_max >= tau_min)) {
    fail(ErrorCode::kInvalidConfig, "temperature clamp must satisfy 0 < tau_min <= tau_max");
  }
  if (!(tau >= tau_min && tau <= tau_max)) {
    fail(ErrorCode::kInvalidConfig, "tau must lie inside [tau_min, tau_max]");
  }
}

namespace {

using Params64 = ParamSet<double>;

void xavier(Params64& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor<double> t = Tensor<double>::zeros(in, out);
  for (auto& v : t.data()) v = rng.uniform(-a, a);
  ps.emplace(name, std::move(t));
}

void zeros(Params64& ps, const std::string& name, std::size_t rows, std::size_t cols) {
  ps.emplace(name, Tensor<double>::zeros(rows, cols));
}

void ones(Params64& ps, const std::string& name, std::size_t cols) {
  ps.emplace(name, Tensor<double>({1, cols}, 1.0));
}

void add_block(Params64& ps, const std::string& prefix, std::size_t d, std::size_t ffn_mult, Rng& rng) {
  ones(ps, prefix + ".ln1.g", d);
  zeros(ps, prefix + ".ln1.b", 1, d);
  for (const char* proj : {"wq", "wk", "wv"}) {
    xavier(ps, prefix + ".attn." + proj, d, d, rng);
    zeros(ps, prefix + ".attn.b" + std::string(proj).substr(1), 1, d);
  }
  zeros(ps, prefix + ".attn.wo", d, d);
  zeros(ps, prefix + ".attn.bo", 1, d);
  ones(ps, prefix + ".ln2.g", d);
  zeros(ps, prefix + ".ln2.b", 1, d);
  xavier(ps, prefix + ".ffn.w1", d, d * ffn_mult, rng);
  zeros(ps, prefix + ".ffn.b1", 1, d * ffn_mult);
  zeros(ps, prefix + ".ffn.w2", d * ffn_mult, d);
  zeros(ps, prefix + ".ffn.b2", 1, d);
}

bool starts_with(const std::string& s, const char* prefix) {
  return s.rfind(prefix, 0) == 0;
}

}  // namespace

ParamSet<float> init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t d = config.dim;
  const std::size_t ffn = config.interaction.ffn_mult;
  Rng rng(seed);
  Params64 ps;
  ps.emplace(kTau, Tensor<double>::scalar(config.tau));
  if (config.separate_tau) ps.emplace(kTauCaption, Tensor<double>::scalar(config.tau));
  if (config.uses_learned_pooling()) {
    zeros(ps, "pool.p_t", 1, d);
    zeros(ps, "pool.p_v", 1, d);
  }
  switch (config.interaction.strategy) {
    case Strategy::kNone:
    case Strategy::kSum:
      break;
    case Strategy::kMlp:
      xavier(ps, "mlp.w1", 2 * d, d, rng);
      zeros(ps, "mlp.b1", 1, d);
      xavier(ps, "mlp.w2", d, d, rng);
      zeros(ps, "mlp.b2", 1, d);
      break;
    case Strategy::kCross:
      zeros(ps, "cross.type", 2, d);
      for (std::size_t l = 0; l < config.interaction.layers; ++l)
        add_block(ps, "cross.block" + std::to_string(l), d, ffn, rng);
      break;
    case Strategy::kCoAttn:
      add_block(ps, "coattn.co.v", d, ffn, rng);
      add_block(ps, "coattn.co.c", d, ffn, rng);
      zeros(ps, "coattn.pos", config.interaction.max_frames, d);
      for (std::size_t l = 0; l < config.interaction.layers; ++l)
        add_block(ps, "coattn.temporal" + std::to_string(l), d, ffn, rng);
      break;
  }
  for (std::size_t l = 0; l < config.caption_layers; ++l)
    add_block(ps, "capagg.block" + std::to_string(l), d, ffn, rng);
  return cast_params<double, float>(ps);
}

std::string param_group(const std::string& name) {
  if (name == kTau || name == kTauCaption) return "tau";
  if (starts_with(name, "pool.")) return "pooling";
  if (starts_with(name, "mlp.")) return "mlp";
  if (starts_with(name, "cross.")) return "cross";
  if (starts_with(name, "coattn.co.")) return "coattn.phi1";
  if (starts_with(name, "coattn.")) return "coattn.phi2";
  if (starts_with(name, "capagg.")) return "caption_branch";
  return "other";
}

bool is_video_branch(const std::string& name) {
  return name != kTauCaption && param_group(name) != "caption_branch";
}

template <typename T>
Bound<T>::Bound(ad::Tape<T>& tape, const ParamSet<T>& params,
                const std::function<bool(const std::string&)>& trainable)
    : tape_(&tape) {
  for (const auto& [name, value] : params) {
    vars_.emplace(name, trainable && trainable(name) ? tape.parameter(name, value)
                                                     : tape.constant(value));
  }
}

template <typename T>
ad::Var<T> Bound<T>::operator()(const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) fail(ErrorCode::kInvalidConfig, "model has no parameter '" + name + "'");
  return it->second;
}

template <typename T>
ad::Var<T> multihead_attention(const Bound<T>& p, const std::string& prefix,
                               ad::Var<T> queries, ad::Var<T> keys_values,
                               std::size_t heads) {
  const std::string a = prefix + ".attn.";
  const ad::Var<T> q = ad::linear(queries, p(a + "wq"), p(a + "bq"));
  const ad::Var<T> k = ad::linear(keys_values, p(a + "wk"), p(a + "bk"));
  const ad::Var<T> v = ad::linear(keys_values, p(a + "wv"), p(a + "bv"));
  const std::size_t d = q.cols();
  const std::size_t dh = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<ad::Var<T>> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const auto qh = ad::slice_cols(q, h * dh, dh);
    const auto kh = ad::slice_cols(k, h * dh, dh);
    const auto vh = ad::slice_cols(v, h * dh, dh);
    const auto weights = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt));
    outs.push_back(ad::matmul(weights, vh));
  }
  const ad::Var<T> merged = heads == 1 ? outs.front() : ad::concat_cols<T>(outs);
  return ad::linear(merged, p(a + "wo"), p(a + "bo"));
}

namespace {

template <typename T>
ad::Var<T> feed_forward(const Bound<T>& p, const std::string& prefix, ad::Var<T> x) {
  const std::string f = prefix + ".ffn.";
  return ad::linear(ad::gelu(ad::linear(x, p(f + "w1"), p(f + "b1"))), p(f + "w2"), p(f + "b2"));
}

template <typename T>
ad::Var<T> norm(const Bound<T>& p, const std::string& name, ad::Var<T> x) {
  return ad::layer_norm(x, p(name + ".g"), p(name + ".b"));
}

}  // namespace

template <typename T>
ad::Var<T> encoder_block(const Bound<T>& p, const std::string& prefix, ad::Var<T> x,
                         std::size_t heads) {
  const auto normed = norm(p, prefix + ".ln1", x);
  const auto h = ad::add(x, multihead_attention(p, prefix, normed, normed, heads));
  return ad::add(h, feed_forward(p, prefix, norm(p, prefix + ".ln2", h)));
}

template <typename T>
std::pair<ad::Var<T>, ad::Var<T>> coattention_block(const Bound<T>& p,
                                                     const std::string& video_prefix,
                                                     const std::string& caption_prefix,
                                                     ad::Var<T> video, ad::Var<T> caption,
                                                     std::size_t heads) {
  const auto v_norm = norm(p, video_prefix + ".ln1", video);
  const auto c_norm = norm(p, caption_prefix + ".ln1", caption);
  const auto v1 = ad::add(video, multihead_attention(p, video_prefix, v_norm, c_norm, heads));
  const auto c1 = ad::add(caption, multihead_attention(p, caption_prefix, c_norm, v_norm, heads));
  const auto v2 = ad::add(v1, feed_forward(p, video_prefix, norm(p, video_prefix + ".ln2", v1)));
  const auto c2 = ad::add(c1, feed_forward(p, caption_prefix, norm(p, caption_prefix + ".ln2", c1)));
  return {v2, c2};
}

#define CAPMATCH_INSTANTIATE_MODEL(T)                                                       \
  template class Bound<T>;                                                                  \
  template ad::Var<T> multihead_attention(const Bound<T>&, const std::string&, ad::Var<T>,  \
                                          ad::Var<T>, std::size_t);                         \
  template ad::Var<T> encoder_block(const Bound<T>&, const std::string&, ad::Var<T>,        \
                                    std::size_t);                                           \
  template std::pair<ad::Var<T>, ad::Var<T>> coattention_block(                             \
      const Bound<T>&, const std::string&, const std::string&, ad::Var<T>, ad::Var<T>,      \
      std::size_t);

CAPMATCH_INSTANTIATE_MODEL(float)
CAPMATCH_INSTANTIATE_MODEL(double)

#undef CAPMATCH_INSTANTIATE_MODEL

}  // namespace capmatch
