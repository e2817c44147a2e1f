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

#include <map>

#include "blob_io.hpp"
#include "capmatch/trainer.hpp"
#include "json.hpp"

namespace capmatch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kMagic = "CVCK";
constexpr int kVersion = 1;
constexpr const char* kStateFile = "state.json";
constexpr const char* kTensorFile = "tensors.bin";

json loss_json(const LossBreakdown& l) {
  return {{"total", l.total}, {"qv", l.qv}, {"qc", l.qc}, {"aug", l.aug}};
}

LossBreakdown loss_from(const json& j) {
  return {j.at("total").get<double>(), j.at("qv").get<double>(), j.at("qc").get<double>(),
          j.at("aug").get<double>()};
}

void add_group(std::string& bytes, json& blobs, const std::string& prefix, const ParamSet<float>& set) {
  for (const auto& [name, t] : set) {
    const std::size_t offset = bytes.size();
    blob::append_floats(bytes, t);
    blobs.push_back({{"name", prefix + name},
                     {"file", kTensorFile},
                     {"offset", offset},
                     {"len_bytes", bytes.size() - offset},
                     {"shape", t.shape()}});
  }
}

}  // namespace

void checkpoint_save(const TrainState& s, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());

  std::string bytes;
  json blobs = json::array();
  add_group(bytes, blobs, "param/", s.params);
  add_group(bytes, blobs, "adam.m/", s.adam.m);
  add_group(bytes, blobs, "adam.v/", s.adam.v);

  json history = json::array();
  for (const auto& h : s.history) {
    history.push_back({{"step", h.step}, {"stage", h.stage}, {"updated", h.updated}, {"loss", loss_json(h.loss)}});
  }
  json epochs = json::array();
  for (const auto& e : s.epochs) {
    json j = {{"stage", e.stage}, {"epoch", e.epoch}, {"steps", e.steps}, {"mean_loss", loss_json(e.mean_loss)}};
    j["val_r1"] = e.val_r1 ? json(*e.val_r1) : json(nullptr);
    epochs.push_back(std::move(j));
  }

  const json state = {
      {"magic", kMagic},
      {"version", kVersion},
      {"dim", s.config.model.dim},
      {"config", to_json(s.config)},
      {"stage", s.stage},
      {"epoch", s.epoch},
      {"cursor", s.cursor},
      {"step", s.step},
      {"stage_step", s.stage_step},
      {"adam_step", s.adam.step},
      {"order", s.order},
      {"rng", s.rng.state()},
      {"epoch_sum", loss_json(s.epoch_sum)},
      {"epoch_steps", s.epoch_steps},
      {"history", std::move(history)},
      {"epochs", std::move(epochs)},
      {"blobs", std::move(blobs)},
  };
  blob::write_file(dir / kTensorFile, bytes);
  blob::write_file(dir / kStateFile, state.dump(1) + "\n");
}

TrainState checkpoint_load(const fs::path& dir, std::optional<std::size_t> expected_dim) {
  const json j = json::parse(blob::read_file(dir / kStateFile), nullptr, false);
  if (j.is_discarded() || !j.is_object()) fail(ErrorCode::kBadMagic, "checkpoint state is not JSON");
  if (!j.contains("magic") || j["magic"] != kMagic) fail(ErrorCode::kBadMagic, "not a checkpoint");
  if (!j.contains("version") || j["version"] != kVersion) {
    fail(ErrorCode::kVersionMismatch, "unsupported checkpoint version");
  }

  TrainState s;
  try {
    const std::size_t dim = j.at("dim").get<std::size_t>();
    if (expected_dim && *expected_dim != dim) {
      fail(ErrorCode::kVersionMismatch, "checkpoint width " + std::to_string(dim) +
                                            " differs from expected " + std::to_string(*expected_dim));
    }
    s.config = apply_config(RunConfig{}, j.at("config"));
    if (s.config.model.dim != dim) fail(ErrorCode::kVersionMismatch, "checkpoint width disagrees with its config");
    s.stage = j.at("stage").get<int>();
    s.epoch = j.at("epoch").get<std::size_t>();
    s.cursor = j.at("cursor").get<std::size_t>();
    s.step = j.at("step").get<std::uint64_t>();
    s.stage_step = j.at("stage_step").get<std::uint64_t>();
    s.adam.step = j.at("adam_step").get<std::uint64_t>();
    s.order = j.at("order").get<std::vector<std::uint32_t>>();
    s.rng = Rng::from_state(j.at("rng").get<std::vector<std::uint64_t>>());
    s.epoch_sum = loss_from(j.at("epoch_sum"));
    s.epoch_steps = j.at("epoch_steps").get<std::size_t>();
    for (const auto& h : j.at("history")) {
      s.history.push_back({h.at("step").get<std::uint64_t>(), h.at("stage").get<int>(),
                           h.at("updated").get<bool>(), loss_from(h.at("loss"))});
    }
    for (const auto& e : j.at("epochs")) {
      EpochReport r;
      r.stage = e.at("stage").get<int>();
      r.epoch = e.at("epoch").get<std::size_t>();
      r.steps = e.at("steps").get<std::size_t>();
      r.mean_loss = loss_from(e.at("mean_loss"));
      if (!e.at("val_r1").is_null()) r.val_r1 = e.at("val_r1").get<double>();
      s.epochs.push_back(r);
    }

    const std::string bytes = blob::read_file(dir / kTensorFile);
    std::size_t covered = 0;
    for (const auto& b : j.at("blobs")) {
      const auto name = b.at("name").get<std::string>();
      const auto shape = b.at("shape").get<std::vector<std::size_t>>();
      const auto offset = b.at("offset").get<std::size_t>();
      const auto len = b.at("len_bytes").get<std::size_t>();
      std::size_t count = 1;
      for (auto d : shape) count *= d;
      if (len != 4 * count || offset != covered || offset + len > bytes.size()) {
        fail(ErrorCode::kShapeMismatch, "checkpoint blob '" + name + "' does not match tensors.bin");
      }
      covered += len;
      auto t = blob::decode_floats(bytes, offset, shape);
      const auto slash = name.find('/');
      const std::string group = name.substr(0, slash);
      const std::string key = name.substr(slash + 1);
      if (group == "param") {
        s.params.emplace(key, std::move(t));
      } else if (group == "adam.m") {
        s.adam.m.emplace(key, std::move(t));
      } else if (group == "adam.v") {
        s.adam.v.emplace(key, std::move(t));
      } else {
        fail(ErrorCode::kInvariantViolation, "unknown checkpoint blob '" + name + "'");
      }
    }
    if (covered != bytes.size()) fail(ErrorCode::kShapeMismatch, "tensors.bin has trailing bytes");
  } catch (const json::exception& e) {
    fail(ErrorCode::kInvariantViolation, std::string("malformed checkpoint state: ") + e.what());
  }

  const auto reference = init_params(s.config.model, 0);
  if (reference.size() != s.params.size()) {
    fail(ErrorCode::kShapeMismatch, "checkpoint parameters do not match its model config");
  }
  for (const auto& [name, t] : reference) {
    auto it = s.params.find(name);
    if (it == s.params.end() || it->second.shape() != t.shape()) {
      fail(ErrorCode::kShapeMismatch, "checkpoint parameter '" + name + "' is missing or misshaped");
    }
  }
  return s;
}

}  // namespace capmatch
