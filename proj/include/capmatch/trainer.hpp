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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "capmatch/archive.hpp"
#include "capmatch/captionops.hpp"
#include "capmatch/config.hpp"
#include "capmatch/evaluator.hpp"
#include "capmatch/model.hpp"
#include "capmatch/objective.hpp"
#include "capmatch/rng.hpp"

namespace capmatch {

struct StepRecord {
  std::uint64_t step = 0;  // 1-based global step
  int stage = 1;
  bool updated = false;    // false when the batch had no usable loss term
  LossBreakdown loss;
};

struct EpochReport {
  int stage = 1;
  std::size_t epoch = 0;  // 0-based within the stage
  std::size_t steps = 0;
  LossBreakdown mean_loss;
  std::optional<double> val_r1;  // fused text-to-video R@1 on the validation archive
};

// Everything needed to continue training exactly where it stopped.
struct TrainState {
  RunConfig config;
  ParamSet<float> params;
  AdamState adam;
  int stage = 1;  // 1, 2, or 3 once finished
  std::size_t epoch = 0;
  std::size_t cursor = 0;  // next batch within the epoch
  std::uint64_t step = 0;
  std::uint64_t stage_step = 0;
  std::vector<std::uint32_t> order;  // permutation of the current epoch; empty before it starts
  Rng rng;
  LossBreakdown epoch_sum;
  std::size_t epoch_steps = 0;
  std::vector<StepRecord> history;
  std::vector<EpochReport> epochs;

  bool finished() const noexcept { return stage > 2; }
};

// Stage 1 optimizes the query-video branch (interaction, pooling and, when
// learnable, the temperature) on L_QV + lambda_aug * L_AUG. Stage 2 freezes
// all of it and optimizes the caption aggregator on L_QC. Optimizer moments
// and the learning-rate schedule restart at each stage.
class Trainer {
 public:
  Trainer(RunConfig config, const EmbeddingArchive& train, const EmbeddingArchive* val = nullptr);
  // Continue from a checkpointed state. The archive must be the one used
  // before; training config keys come from the state.
  Trainer(TrainState state, const EmbeddingArchive& train, const EmbeddingArchive* val = nullptr);

  // Runs one batch. Returns false (and does nothing) once finished.
  bool step();
  // Runs up to `max_steps` batches (all remaining when absent).
  void run(std::optional<std::uint64_t> max_steps = std::nullopt);

  const TrainState& state() const noexcept { return state_; }
  std::size_t batches_per_epoch() const noexcept { return batches_per_epoch_; }
  std::uint64_t total_steps() const noexcept;

 private:
  void setup();
  std::size_t stage_epochs(int stage) const;
  void start_stage_if_empty();
  void finish_epoch();

  TrainState state_;
  const EmbeddingArchive* train_;
  const EmbeddingArchive* val_;
  std::size_t batches_per_epoch_ = 0;
  std::vector<AugmentationPair> aug_pairs_;
  std::vector<std::vector<std::size_t>> aug_by_video_;
};

// Fresh state after initialization, before any batch.
TrainState initial_state(const RunConfig& config, std::size_t dim);

struct TrainResult {
  TrainState state;
  std::vector<RetrievalReport> final_val;  // empty without a validation archive
};

TrainResult train(const EmbeddingArchive& train, const EmbeddingArchive* val, const RunConfig& config);

// Directory with state.json and tensors.bin (little-endian float32 blobs in
// the archive's blob convention).
void checkpoint_save(const TrainState& state, const std::filesystem::path& dir);
// kVersionMismatch when the stored width differs from `expected_dim`.
TrainState checkpoint_load(const std::filesystem::path& dir,
                           std::optional<std::size_t> expected_dim = std::nullopt);

struct AblationSpec {
  std::string name;
  nlohmann::json overrides;  // flat config keys applied on the base config
};

struct AblationRow {
  std::string name;
  RunConfig config;
  std::vector<RetrievalReport> per_seed;  // fused t2v on the validation archive
  double mean_r1 = 0;
};

// Per matching mode: baseline (no interaction, no augmentation, no fusion),
// +aug, +coattn interaction, +fusion, and everything combined.
std::vector<AblationSpec> default_ablation_grid();

std::vector<AblationRow> run_ablation(const EmbeddingArchive& train, const EmbeddingArchive& val,
                                      const RunConfig& base, const std::vector<AblationSpec>& grid,
                                      const std::vector<std::uint64_t>& seeds);

}  // namespace capmatch
