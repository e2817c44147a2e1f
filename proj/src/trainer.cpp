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

#include "capmatch/trainer.hpp"

#include <numeric>

#include "capmatch/forward.hpp"

namespace capmatch {

namespace {

// Keeps the shuffling stream apart from the initialization stream.
constexpr std::uint64_t kShuffleSalt = 0x9E3779B97F4A7C15ULL;

void add_into(LossBreakdown& sum, const LossBreakdown& x) {
  sum.total += x.total;
  sum.qv += x.qv;
  sum.qc += x.qc;
  sum.aug += x.aug;
}

LossBreakdown divided(const LossBreakdown& sum, std::size_t n) {
  if (n == 0) return {};
  const double d = static_cast<double>(n);
  return {sum.total / d, sum.qv / d, sum.qc / d, sum.aug / d};
}

}  // namespace

TrainState initial_state(const RunConfig& config, std::size_t dim) {
  TrainState s;
  s.config = config;
  s.config.model.dim = dim;
  s.config.validate();
  s.params = init_params(s.config.model, s.config.train.seed);
  s.rng = Rng(s.config.train.seed ^ kShuffleSalt);
  return s;
}

Trainer::Trainer(RunConfig config, const EmbeddingArchive& train, const EmbeddingArchive* val)
    : state_(initial_state(config, train.dim())), train_(&train), val_(val) {
  setup();
}

Trainer::Trainer(TrainState state, const EmbeddingArchive& train, const EmbeddingArchive* val)
    : state_(std::move(state)), train_(&train), val_(val) {
  if (state_.config.model.dim != train.dim()) {
    fail(ErrorCode::kDimensionMismatch, "checkpoint width differs from the training archive");
  }
  state_.config.validate();
  setup();
  if (!state_.order.empty() && state_.order.size() != train.size()) {
    fail(ErrorCode::kArchiveMismatch, "checkpoint batch order does not match the archive size");
  }
}

void Trainer::setup() {
  const std::size_t n = train_->size();
  const std::size_t b = state_.config.train.batch_size;
  if (n < 2) fail(ErrorCode::kInvalidConfig, "training needs at least 2 items");
  if (val_ && val_->dim() != train_->dim()) {
    fail(ErrorCode::kDimensionMismatch, "validation archive width differs from training archive");
  }
  batches_per_epoch_ = n / b + (n % b >= 2 ? 1 : 0);
  aug_by_video_.assign(n, {});
  aug_pairs_.clear();
  if (state_.config.train.aug) {
    const auto filtered = filter_captions(*train_, state_.config.train.aug_top_k);
    aug_pairs_ = build_augmentation_pairs(*train_, filtered);
    for (std::size_t i = 0; i < aug_pairs_.size(); ++i) aug_by_video_[aug_pairs_[i].video_index].push_back(i);
  }
}

std::size_t Trainer::stage_epochs(int stage) const {
  return stage == 1 ? state_.config.train.epochs_stage1 : state_.config.train.epochs_stage2;
}

std::uint64_t Trainer::total_steps() const noexcept {
  return static_cast<std::uint64_t>(state_.config.train.epochs_stage1 + state_.config.train.epochs_stage2) *
         batches_per_epoch_;
}

void Trainer::start_stage_if_empty() {
  while (!state_.finished() && state_.epoch >= stage_epochs(state_.stage)) {
    state_.stage += 1;
    state_.epoch = 0;
    state_.cursor = 0;
    state_.stage_step = 0;
    state_.order.clear();
    state_.adam = AdamState{};
  }
}

bool Trainer::step() {
  start_stage_if_empty();
  if (state_.finished()) return false;

  const RunConfig& cfg = state_.config;
  const std::size_t n = train_->size();
  const std::size_t b = cfg.train.batch_size;
  if (state_.order.empty()) {
    state_.order.resize(n);
    std::iota(state_.order.begin(), state_.order.end(), 0u);
    state_.rng.shuffle(state_.order.begin(), state_.order.end());
  }

  const std::size_t begin = state_.cursor * b;
  const std::size_t end = std::min(n, begin + b);
  const bool stage1 = state_.stage == 1;

  std::vector<ItemView<float>> items;
  std::vector<AugView<float>> augs;
  for (std::size_t pos = begin; pos < end; ++pos) {
    const std::size_t idx = state_.order[pos];
    const QueryItem& q = train_->queries()[idx];
    const VideoItem& v = train_->videos()[idx];
    items.push_back({&q.words, &q.global, &v.frames, &v.captions});
    if (stage1) {
      for (auto a : aug_by_video_[idx]) augs.push_back({&aug_pairs_[a].caption, pos - begin});
    }
  }

  BatchTerms terms;
  terms.qv = stage1;
  terms.qc = !stage1;
  terms.aug = stage1 && cfg.train.aug;

  const bool tau_learnable = cfg.model.tau_learnable;
  auto trainable = [stage1, tau_learnable](const std::string& name) {
    if (name == kTau) return stage1 && tau_learnable;
    if (name == kTauCaption) return !stage1 && tau_learnable;
    return stage1 ? is_video_branch(name) : param_group(name) == "caption_branch";
  };

  StepRecord record;
  record.step = state_.step + 1;
  record.stage = state_.stage;
  {
    ad::Tape<float> tape(true);
    const Bound<float> p(tape, state_.params, trainable);
    const auto loss = batch_loss<float>(p, cfg.model, items, augs, terms, cfg.train.lambda_aug);
    if (loss) {
      record.loss = loss->parts;
      const auto grads = tape.backward(loss->total);
      if (!grads.empty()) {
        const std::uint64_t stage_total = static_cast<std::uint64_t>(stage_epochs(state_.stage)) * batches_per_epoch_;
        const double lr = scheduled_lr(cfg.train.lr, state_.stage_step + 1, cfg.train.warmup_steps, stage_total);
        const ParamClamp clamps[] = {{kTau, cfg.model.tau_min, cfg.model.tau_max},
                                     {kTauCaption, cfg.model.tau_min, cfg.model.tau_max}};
        adam_step(state_.params, grads, state_.adam, lr, AdamHyper{}, clamps);
        record.updated = true;
      }
      add_into(state_.epoch_sum, loss->parts);
      state_.epoch_steps += 1;
    }
  }
  state_.history.push_back(record);
  state_.step += 1;
  state_.stage_step += 1;
  state_.cursor += 1;
  if (state_.cursor >= batches_per_epoch_) finish_epoch();
  return true;
}

void Trainer::finish_epoch() {
  EpochReport report;
  report.stage = state_.stage;
  report.epoch = state_.epoch;
  report.steps = state_.epoch_steps;
  report.mean_loss = divided(state_.epoch_sum, state_.epoch_steps);
  const std::size_t every = state_.config.train.eval_every;
  if (val_ && every > 0 && (state_.epoch + 1) % every == 0) {
    const Scorer scorer(state_.config.model, state_.params, *val_, state_.config.fusion,
                        state_.config.threads);
    report.val_r1 = scorer.rank_all(Direction::kTextToVideo).r1;
  }
  state_.epochs.push_back(report);
  state_.epoch += 1;
  state_.cursor = 0;
  state_.order.clear();
  state_.epoch_sum = {};
  state_.epoch_steps = 0;
  start_stage_if_empty();
}

void Trainer::run(std::optional<std::uint64_t> max_steps) {
  std::uint64_t done = 0;
  while ((!max_steps || done < *max_steps) && step()) ++done;
}

TrainResult train(const EmbeddingArchive& train_archive, const EmbeddingArchive* val,
                  const RunConfig& config) {
  Trainer trainer(config, train_archive, val);
  trainer.run();
  TrainResult result{trainer.state(), {}};
  if (val) {
    result.final_val = evaluate(result.state.config.model, result.state.params, *val,
                                result.state.config.fusion, result.state.config.threads);
  }
  return result;
}

std::vector<AblationSpec> default_ablation_grid() {
  std::vector<AblationSpec> grid;
  for (const char* mode : {"global", "finegrained"}) {
    const std::string m = mode;
    const nlohmann::json off = {{"mode", m}, {"interaction", "none"}, {"aug", false},
                                {"alpha", 0.0}, {"epochs_stage2", 0}};
    auto with = [&](nlohmann::json changes) {
      nlohmann::json j = off;
      for (auto it = changes.begin(); it != changes.end(); ++it) {
        if (it.value().is_null()) {
          j.erase(it.key());
        } else {
          j[it.key()] = it.value();
        }
      }
      return j;
    };
    // Null entries fall back to the base config value.
    grid.push_back({m + "/baseline", off});
    grid.push_back({m + "/+aug", with({{"aug", true}})});
    grid.push_back({m + "/+coattn", with({{"interaction", "coattn"}})});
    grid.push_back({m + "/+fusion", with({{"alpha", nullptr}, {"epochs_stage2", nullptr}})});
    grid.push_back({m + "/full", with({{"aug", true}, {"interaction", "coattn"}, {"alpha", nullptr},
                                      {"epochs_stage2", nullptr}})});
  }
  return grid;
}

std::vector<AblationRow> run_ablation(const EmbeddingArchive& train_archive, const EmbeddingArchive& val,
                                      const RunConfig& base, const std::vector<AblationSpec>& grid,
                                      const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) fail(ErrorCode::kInvalidConfig, "ablation needs at least one seed");
  std::vector<AblationRow> rows;
  for (const auto& spec : grid) {
    AblationRow row;
    row.name = spec.name;
    row.config = apply_config(base, spec.overrides);
    row.config.train.eval_every = 0;
    for (auto seed : seeds) {
      RunConfig cfg = row.config;
      cfg.train.seed = seed;
      const auto result = train(train_archive, &val, cfg);
      row.per_seed.push_back(result.final_val.at(0));
      row.mean_r1 += result.final_val.at(0).r1;
    }
    row.mean_r1 /= static_cast<double>(seeds.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace capmatch
