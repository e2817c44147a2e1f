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

#include "capmatch/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "capmatch/error.hpp"

namespace capmatch {

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) fail(ErrorCode::kInvalidArgument, "below(0)");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

std::vector<std::uint64_t> Rng::state() const {
  std::stringstream ss;
  ss << engine_;
  std::vector<std::uint64_t> words;
  std::uint64_t w;
  while (ss >> w) words.push_back(w);
  return words;
}

Rng Rng::from_state(const std::vector<std::uint64_t>& words) {
  std::stringstream ss;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) ss << ' ';
    ss << words[i];
  }
  Rng rng;
  ss >> rng.engine_;
  if (ss.fail()) fail(ErrorCode::kInvalidArgument, "malformed RNG state");
  return rng;
}

}  // namespace capmatch
