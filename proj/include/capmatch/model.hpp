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
#include <functional>
#include <map>
#include <string>
#include <utility>

#include "capmatch/autodiff.hpp"
#include "capmatch/tensor.hpp"

namespace capmatch {

enum class MatchMode { kGlobal, kFineGrained };
enum class Pooling { kUniform, kLearnedWeighted };
enum class Strategy { kNone, kSum, kMlp, kCross, kCoAttn };

const char* to_string(MatchMode mode) noexcept;
const char* to_string(Pooling pooling) noexcept;
const char* to_string(Strategy strategy) noexcept;
MatchMode parse_match_mode(const std::string& s);
Pooling parse_pooling(const std::string& s);
Strategy parse_strategy(const std::string& s);

struct InteractionConfig {
  Strategy strategy = Strategy::kCoAttn;
  std::size_t layers = 1;
  std::size_t heads = 0;  // 0 picks 4 below width 512 and 8 from 512 on
  std::size_t ffn_mult = 4;
  std::size_t max_frames = 64;
};

struct ModelConfig {
  std::size_t dim = 32;
  MatchMode mode = MatchMode::kGlobal;
  Pooling pooling = Pooling::kUniform;
  InteractionConfig interaction;
  std::size_t caption_layers = 2;
  double tau = 0.05;
  bool tau_learnable = false;
  double tau_min = 0.01;
  double tau_max = 0.5;
  // Give the query-caption loss its own temperature instead of sharing one.
  bool separate_tau = false;

  std::size_t heads() const noexcept;
  bool uses_learned_pooling() const noexcept {
    return mode == MatchMode::kFineGrained && pooling == Pooling::kLearnedWeighted;
  }
  // Throws kInvalidConfig.
  void validate() const;
};

// Learnable parameters by name. std::map keeps iteration order (and hence
// serialization and optimizer order) deterministic.
template <typename T>
using ParamSet = std::map<std::string, Tensor<T>>;

inline const std::string kTau = "tau";
inline const std::string kTauCaption = "tau_qc";

// Fresh parameters: Xavier-uniform projections, unit layer-norm gains, and
// zeros for every attention / FFN output projection, type and positional
// embedding and the pooling vectors.
ParamSet<float> init_params(const ModelConfig& config, std::uint64_t seed);

// Coarse grouping used by gradient checks and stage freezing: "pooling",
// "mlp", "cross", "coattn.phi1", "coattn.phi2", "caption_branch", "tau".
std::string param_group(const std::string& name);
// True for parameters trained in the first (query-video) stage.
bool is_video_branch(const std::string& name);

template <typename T, typename U>
ParamSet<U> cast_params(const ParamSet<T>& params) {
  ParamSet<U> out;
  for (const auto& [name, t] : params) out.emplace(name, t.template cast<U>());
  return out;
}

// Parameters placed on a tape: trainable ones as registered parameters,
// the rest as constants.
template <typename T>
class Bound {
 public:
  Bound() = default;
  Bound(ad::Tape<T>& tape, const ParamSet<T>& params,
        const std::function<bool(const std::string&)>& trainable);

  ad::Var<T> operator()(const std::string& name) const;
  bool has(const std::string& name) const { return vars_.count(name) != 0; }
  ad::Tape<T>& tape() const { return *tape_; }

 private:
  ad::Tape<T>* tape_ = nullptr;
  std::map<std::string, ad::Var<T>> vars_;
};

// Multi-head scaled dot-product attention with input/output projections
// under `prefix` + ".attn".
template <typename T>
ad::Var<T> multihead_attention(const Bound<T>& p, const std::string& prefix,
                               ad::Var<T> queries, ad::Var<T> keys_values,
                               std::size_t heads);

// Pre-norm encoder block: x + Attn(LN1(x)), then h + FFN(LN2(h)) with a GELU
// feed-forward layer.
template <typename T>
ad::Var<T> encoder_block(const Bound<T>& p, const std::string& prefix, ad::Var<T> x,
                         std::size_t heads);

// Co-attentional block: each stream attends from its own normalized tokens to
// the other stream's normalized tokens, with residual attention and FFN.
// Returns {video stream, caption stream}.
template <typename T>
std::pair<ad::Var<T>, ad::Var<T>> coattention_block(const Bound<T>& p,
                                                     const std::string& video_prefix,
                                                     const std::string& caption_prefix,
                                                     ad::Var<T> video, ad::Var<T> caption,
                                                     std::size_t heads);

}  // namespace capmatch
