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
#include <string>
#include <vector>

#include "capmatch/archive.hpp"
#include "capmatch/evaluator.hpp"
#include "capmatch/model.hpp"
#include "json.hpp"

namespace capmatch {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs_stage1 = 10;
  std::size_t epochs_stage2 = 5;
  double lr = 1e-3;
  std::size_t warmup_steps = 20;
  std::uint64_t seed = 7;
  bool aug = true;
  std::size_t aug_top_k = 1;
  double lambda_aug = 1.0;
  // Validation every this many epochs; 0 disables it.
  std::size_t eval_every = 1;

  void validate() const;
};

// Everything a command needs, addressable through one flat key space.
struct RunConfig {
  SynthConfig synth;
  ModelConfig model;
  TrainConfig train;
  FusionConfig fusion;
  std::size_t max_words = EmbeddingArchive::kDefaultMaxWords;
  std::size_t threads = 1;

  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string type;  // "int", "float", "bool" or "string"
  std::string help;
};

// Every recognized key in documentation order.
const std::vector<ConfigKey>& config_keys();

// Flat JSON object. "seed" drives both synthesis and training; "dim" both the
// synthetic width and the model width.
nlohmann::json to_json(const RunConfig& config);

// Applies the keys of `patch` on top of `base`. Unknown keys and ill-typed
// values raise kInvalidConfig naming the key.
RunConfig apply_config(const RunConfig& base, const nlohmann::json& patch);

// Applies a single key given as text, as a command-line flag would.
RunConfig apply_config_value(const RunConfig& base, const std::string& key, const std::string& value);

RunConfig load_run_config(const std::string& path, const RunConfig& base = {});

// Current value of `key` rendered as text, for help output.
std::string config_value_text(const RunConfig& config, const std::string& key);

}  // namespace capmatch
