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

#include "capmatch/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>

#include "capmatch/forward.hpp"
#include "capmatch/rng.hpp"

namespace capmatch {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
  return std::fabs(analytic - numeric) / denom;
}

std::vector<GradcheckCase> default_gradcheck_cases(const GradcheckOptions& options) {
  ModelConfig base;
  base.dim = options.dim;
  base.tau = 0.1;
  base.tau_learnable = true;
  base.caption_layers = 2;
  base.interaction.layers = 1;
  base.interaction.ffn_mult = 2;
  base.interaction.max_frames = options.frames;

  std::vector<GradcheckCase> cases;
  auto add = [&](const std::string& name, MatchMode mode, Pooling pooling, Strategy strategy,
                 bool separate_tau) {
    ModelConfig m = base;
    m.mode = mode;
    m.pooling = pooling;
    m.interaction.strategy = strategy;
    m.separate_tau = separate_tau;
    cases.push_back({name, m});
  };
  add("global/mlp", MatchMode::kGlobal, Pooling::kUniform, Strategy::kMlp, false);
  add("global/cross", MatchMode::kGlobal, Pooling::kUniform, Strategy::kCross, false);
  add("global/coattn", MatchMode::kGlobal, Pooling::kUniform, Strategy::kCoAttn, true);
  add("finegrained/learned/sum", MatchMode::kFineGrained, Pooling::kLearnedWeighted, Strategy::kSum, false);
  add("finegrained/learned/coattn", MatchMode::kFineGrained, Pooling::kLearnedWeighted, Strategy::kCoAttn,
      false);
  return cases;
}

namespace {

template <typename T>
Tensor<T> random_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor<T> t({rows, cols});
  for (auto& x : t.data()) x = static_cast<T>(rng.normal());
  return l2_normalize(t);
}

template <typename T>
struct Problem {
  std::vector<Tensor<T>> words, globals, frames, captions, aug;
  std::vector<ItemView<T>> items;
  std::vector<AugView<T>> aug_views;
};

template <typename T>
void build_problem(Problem<T>& pb, Rng& rng, const GradcheckOptions& o) {
  const std::size_t b = o.batch;
  for (std::size_t i = 0; i < b; ++i) {
    pb.words.push_back(random_rows<T>(rng, o.words, o.dim));
    pb.globals.push_back(random_rows<T>(rng, 1, o.dim));
    pb.frames.push_back(random_rows<T>(rng, o.frames, o.dim));
    pb.captions.push_back(random_rows<T>(rng, o.captions, o.dim));
    pb.aug.push_back(kernels::slice_rows(pb.captions.back(), 0, 1));
  }
  for (std::size_t i = 0; i < b; ++i) {
    pb.items.push_back({&pb.words[i], &pb.globals[i], &pb.frames[i], &pb.captions[i]});
    pb.aug_views.push_back({&pb.aug[i], i});
  }
}

template <typename T>
ParamSet<T> random_params(const ModelConfig& model, Rng& rng) {
  auto params = cast_params<float, T>(init_params(model, 1));
  for (auto& [name, t] : params) {
    if (param_group(name) == "tau") {
      t.data()[0] = static_cast<T>(model.tau + 0.05 * rng.uniform());
      continue;
    }
    const bool gain = name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0;
    for (auto& x : t.data()) x = static_cast<T>((gain ? 1.0 : 0.0) + 0.4 * rng.normal());
  }
  return params;
}

template <typename T>
void check_case(const GradcheckCase& c, std::uint64_t seed, const GradcheckOptions& o, double h,
                std::map<std::string, GroupError>& groups) {
  Rng rng(seed);
  Problem<T> pb;
  build_problem(pb, rng, o);
  ParamSet<T> params = random_params<T>(c.model, rng);
  const BatchTerms terms;
  constexpr double kLambda = 0.7;

  ad::GradMap<T> grads;
  {
    ad::Tape<T> tape(true);
    const Bound<T> p(tape, params, [](const std::string&) { return true; });
    const auto loss = batch_loss<T>(p, c.model, pb.items, pb.aug_views, terms, kLambda);
    grads = tape.backward(loss->total);
  }

  auto value = [&]() {
    ad::Tape<T> tape(false);
    const Bound<T> p(tape, params, {});
    return static_cast<double>(
        batch_loss<T>(p, c.model, pb.items, pb.aug_views, terms, kLambda)->total.value().item());
  };

  for (auto& [name, t] : params) {
    GroupError& g = groups[param_group(name)];
    g.group = param_group(name);
    const auto& grad = grads.at(name).data();
    auto data = t.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const T saved = data[i];
      data[i] = static_cast<T>(saved + h);
      const double up = value();
      data[i] = static_cast<T>(saved - h);
      const double down = value();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      g.max_rel_error = std::max(g.max_rel_error, relative_error(grad[i], numeric, o.floor));
      g.checked += 1;
    }
  }
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options, const std::vector<GradcheckCase>& cases) {
  const auto start = std::chrono::steady_clock::now();
  const double h = options.step > 0 ? options.step : (options.f64 ? 1e-4 : 1e-2);
  std::map<std::string, GroupError> groups;
  GradcheckReport report;
  for (const auto& c : cases) {
    c.model.validate();
    report.cases.push_back(c.name);
    for (auto seed : options.seeds) {
      if (options.f64) {
        check_case<double>(c, seed, options, h, groups);
      } else {
        check_case<float>(c, seed, options, h, groups);
      }
    }
  }
  for (auto& [_, g] : groups) report.groups.push_back(g);
  report.threshold = options.f64 ? 1e-5 : 5e-2;
  report.passed = !report.groups.empty() &&
                  std::all_of(report.groups.begin(), report.groups.end(),
                              [&](const GroupError& g) { return g.max_rel_error < report.threshold; });
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  return run_gradcheck(options, default_gradcheck_cases(options));
}

std::string format_gradcheck(const GradcheckReport& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %14s %10s\n", "group", "max_rel_error", "checked");
  out += line;
  for (const auto& g : r.groups) {
    std::snprintf(line, sizeof line, "%-16s %14.3e %10zu\n", g.group.c_str(), g.max_rel_error, g.checked);
    out += line;
  }
  std::snprintf(line, sizeof line, "threshold %.1e, %zu cases, %.2f s: %s\n", r.threshold, r.cases.size(),
                r.seconds, r.passed ? "PASS" : "FAIL");
  out += line;
  return out;
}

}  // namespace capmatch
