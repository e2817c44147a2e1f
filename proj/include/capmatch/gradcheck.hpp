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

#include "capmatch/model.hpp"

namespace capmatch {

// Finite-difference audit of the analytic gradient of the full training
// objective (query-video, query-caption and augmentation terms at once).
struct GradcheckCase {
  std::string name;
  ModelConfig model;
};

struct GradcheckOptions {
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  bool f64 = true;
  // Central-difference step; 0 picks 1e-4 for 64-bit and 1e-2 for 32-bit.
  double step = 0;
  // Denominator floor of the relative error.
  double floor = 1e-2;
  std::size_t dim = 8;
  std::size_t batch = 3;
  std::size_t frames = 3;
  std::size_t captions = 3;
  std::size_t words = 3;
};

struct GroupError {
  std::string group;
  double max_rel_error = 0;
  std::size_t checked = 0;
};

struct GradcheckReport {
  std::vector<std::string> cases;
  std::vector<GroupError> groups;  // sorted by group name
  double threshold = 0;
  double seconds = 0;
  bool passed = false;
};

// |analytic - numeric| / max(|analytic|, |numeric|, floor).
double relative_error(double analytic, double numeric, double floor);

// Interaction strategies in both matching modes, learned pooling, the
// caption branch and learnable (also separate) temperatures.
std::vector<GradcheckCase> default_gradcheck_cases(const GradcheckOptions& options);

GradcheckReport run_gradcheck(const GradcheckOptions& options = {});
GradcheckReport run_gradcheck(const GradcheckOptions& options, const std::vector<GradcheckCase>& cases);

std::string format_gradcheck(const GradcheckReport& report);

}  // namespace capmatch
