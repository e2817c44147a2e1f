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

#include "capmatch/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace capmatch {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size < 2) fail(ErrorCode::kInvalidConfig, "batch_size must be >= 2");
  if (!(lr > 0.0) || !std::isfinite(lr)) fail(ErrorCode::kInvalidConfig, "lr must be positive");
  if (aug_top_k < 1) fail(ErrorCode::kInvalidConfig, "aug_top_k must be >= 1");
  if (!(lambda_aug >= 0.0) || !std::isfinite(lambda_aug)) {
    fail(ErrorCode::kInvalidConfig, "lambda_aug must be >= 0");
  }
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (!std::isfinite(fusion.alpha) || fusion.alpha < 0.0) {
    fail(ErrorCode::kInvalidConfig, "alpha must be finite and >= 0");
  }
  if (max_words < 1) fail(ErrorCode::kInvalidConfig, "max_words must be >= 1");
  if (threads < 1) fail(ErrorCode::kInvalidConfig, "threads must be >= 1");
}

namespace {

struct KeyDef {
  ConfigKey key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename Int>
Int as_uint(const std::string& key, const json& v) {
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    fail(ErrorCode::kInvalidConfig, "config key '" + key + "' expects a non-negative integer");
  }
  return static_cast<Int>(v.get<unsigned long long>());
}

double as_double(const std::string& key, const json& v) {
  if (!v.is_number()) fail(ErrorCode::kInvalidConfig, "config key '" + key + "' expects a number");
  return v.get<double>();
}

bool as_bool(const std::string& key, const json& v) {
  if (!v.is_boolean()) fail(ErrorCode::kInvalidConfig, "config key '" + key + "' expects true or false");
  return v.get<bool>();
}

std::string as_string(const std::string& key, const json& v) {
  if (!v.is_string()) fail(ErrorCode::kInvalidConfig, "config key '" + key + "' expects a string");
  return v.get<std::string>();
}

template <typename Parse>
auto parse_enum(const std::string& key, const json& v, Parse parse) {
  try {
    return parse(as_string(key, v));
  } catch (const Error& e) {
    fail(ErrorCode::kInvalidConfig, "config key '" + key + "': " + e.what());
  }
}

#define CM_UINT(NAME, FIELD, HELP)                                                \
  KeyDef{{NAME, "int", HELP},                                                     \
         [](const RunConfig& c) { return json(c.FIELD); },                        \
         [](RunConfig& c, const json& v) { c.FIELD = as_uint<decltype(c.FIELD)>(NAME, v); }}
#define CM_FLOAT(NAME, FIELD, HELP)                                               \
  KeyDef{{NAME, "float", HELP},                                                   \
         [](const RunConfig& c) { return json(c.FIELD); },                        \
         [](RunConfig& c, const json& v) { c.FIELD = as_double(NAME, v); }}
#define CM_BOOL(NAME, FIELD, HELP)                                                \
  KeyDef{{NAME, "bool", HELP},                                                    \
         [](const RunConfig& c) { return json(c.FIELD); },                        \
         [](RunConfig& c, const json& v) { c.FIELD = as_bool(NAME, v); }}

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = {
      // data
      CM_UINT("n", synth.n, "synthetic corpus size"),
      KeyDef{{"dim", "int", "embedding width (synthetic data and model)"},
             [](const RunConfig& c) { return json(c.model.dim); },
             [](RunConfig& c, const json& v) {
               c.model.dim = c.synth.dim = as_uint<std::size_t>("dim", v);
             }},
      CM_UINT("frames", synth.frames, "synthetic frames per video"),
      CM_UINT("captions", synth.captions, "synthetic captions per video"),
      CM_UINT("words", synth.words, "synthetic words per query"),
      CM_FLOAT("sigma_q", synth.sigma_q, "query noise level"),
      CM_FLOAT("sigma_v", synth.sigma_v, "frame noise level"),
      CM_FLOAT("sigma_c", synth.sigma_c, "caption noise level"),
      CM_FLOAT("sigma_w", synth.sigma_w, "word noise around the query"),
      CM_FLOAT("distractor_fraction", synth.distractor_fraction,
               "probability that a caption describes a random other item"),
      KeyDef{{"split", "string", "split of synthesized archives: train, val or test"},
             [](const RunConfig& c) { return json(split_name(c.synth.split)); },
             [](RunConfig& c, const json& v) { c.synth.split = parse_enum("split", v, parse_split); }},
      CM_BOOL("caption_text", synth.caption_text, "write a captions.jsonl sidecar"),
      CM_UINT("max_words", max_words, "longest accepted query on read"),
      // model
      KeyDef{{"mode", "string", "query-video matching: global or finegrained"},
             [](const RunConfig& c) { return json(to_string(c.model.mode)); },
             [](RunConfig& c, const json& v) { c.model.mode = parse_enum("mode", v, parse_match_mode); }},
      KeyDef{{"pooling", "string", "fine-grained token pooling: uniform or learned"},
             [](const RunConfig& c) { return json(to_string(c.model.pooling)); },
             [](RunConfig& c, const json& v) { c.model.pooling = parse_enum("pooling", v, parse_pooling); }},
      KeyDef{{"interaction", "string", "video-caption interaction: none, sum, mlp, cross or coattn"},
             [](const RunConfig& c) { return json(to_string(c.model.interaction.strategy)); },
             [](RunConfig& c, const json& v) {
               c.model.interaction.strategy = parse_enum("interaction", v, parse_strategy);
             }},
      CM_UINT("layers", model.interaction.layers, "transformer layers in the interaction module"),
      CM_UINT("heads", model.interaction.heads, "attention heads (0 picks by width)"),
      CM_UINT("ffn_mult", model.interaction.ffn_mult, "feed-forward width multiplier"),
      CM_UINT("max_frames", model.interaction.max_frames, "positional table length"),
      CM_UINT("caption_layers", model.caption_layers, "encoder layers of the caption aggregator"),
      CM_FLOAT("tau", model.tau, "softmax temperature"),
      CM_BOOL("tau_learnable", model.tau_learnable, "train the temperature"),
      CM_FLOAT("tau_min", model.tau_min, "lower temperature clamp"),
      CM_FLOAT("tau_max", model.tau_max, "upper temperature clamp"),
      CM_BOOL("separate_tau", model.separate_tau, "own temperature for the query-caption loss"),
      // training
      CM_UINT("batch_size", train.batch_size, "items per batch"),
      CM_UINT("epochs_stage1", train.epochs_stage1, "query-video stage epochs"),
      CM_UINT("epochs_stage2", train.epochs_stage2, "query-caption stage epochs"),
      CM_FLOAT("lr", train.lr, "peak learning rate"),
      CM_UINT("warmup_steps", train.warmup_steps, "linear warmup steps per stage"),
      CM_BOOL("aug", train.aug, "caption-video augmentation pairs in stage 1"),
      CM_UINT("aug_top_k", train.aug_top_k, "captions kept per video for augmentation"),
      CM_FLOAT("lambda_aug", train.lambda_aug, "weight of the augmentation loss"),
      CM_UINT("eval_every", train.eval_every, "validate every N epochs (0 = never)"),
      // evaluation and runtime
      CM_FLOAT("alpha", fusion.alpha, "weight of the query-caption score"),
      KeyDef{{"seed", "int", "seed for synthesis, initialization and shuffling"},
             [](const RunConfig& c) { return json(c.train.seed); },
             [](RunConfig& c, const json& v) {
               c.train.seed = c.synth.seed = as_uint<std::uint64_t>("seed", v);
             }},
      CM_UINT("threads", threads, "worker threads for evaluation (1 = bit-exact path)"),
  };
  return defs;
}

#undef CM_UINT
#undef CM_FLOAT
#undef CM_BOOL

const KeyDef& find_key(const std::string& name) {
  for (const auto& d : key_defs())
    if (d.key.name == name) return d;
  fail(ErrorCode::kInvalidConfig, "unknown config key '" + name + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& d : key_defs()) out.push_back(d.key);
    return out;
  }();
  return keys;
}

json to_json(const RunConfig& config) {
  json j = json::object();
  for (const auto& d : key_defs()) j[d.key.name] = d.get(config);
  return j;
}

RunConfig apply_config(const RunConfig& base, const json& patch) {
  if (!patch.is_object()) fail(ErrorCode::kInvalidConfig, "config must be a JSON object");
  for (auto it = patch.begin(); it != patch.end(); ++it) find_key(it.key());
  RunConfig out = base;
  for (auto it = patch.begin(); it != patch.end(); ++it) find_key(it.key()).set(out, it.value());
  return out;
}

RunConfig apply_config_value(const RunConfig& base, const std::string& key, const std::string& value) {
  const KeyDef& d = find_key(key);
  json v;
  if (d.key.type == "string") {
    v = value;
  } else if (d.key.type == "bool") {
    if (value == "true" || value == "1") {
      v = true;
    } else if (value == "false" || value == "0") {
      v = false;
    } else {
      fail(ErrorCode::kInvalidConfig, "config key '" + key + "' expects true or false");
    }
  } else {
    v = json::parse(value, nullptr, false);
    if (v.is_discarded() || !v.is_number()) {
      fail(ErrorCode::kInvalidConfig, "config key '" + key + "' expects a number, got '" + value + "'");
    }
  }
  RunConfig out = base;
  d.set(out, v);
  return out;
}

RunConfig load_run_config(const std::string& path, const RunConfig& base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const json j = json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) fail(ErrorCode::kInvalidConfig, "config '" + path + "' is not valid JSON");
  return apply_config(base, j);
}

std::string config_value_text(const RunConfig& config, const std::string& key) {
  const json v = find_key(key).get(config);
  return v.is_string() ? v.get<std::string>() : v.dump();
}

}  // namespace capmatch
