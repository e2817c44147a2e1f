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

#include "capmatch/capmatch.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "capmatch/archive.hpp"
#include "capmatch/captionops.hpp"
#include "capmatch/config.hpp"
#include "capmatch/evaluator.hpp"
#include "capmatch/gradcheck.hpp"
#include "capmatch/trainer.hpp"
#include "json.hpp"

using nlohmann::json;
namespace cm = capmatch;

struct cm_archive {
  cm::EmbeddingArchive archive;
};

struct cm_model {
  cm::RunConfig config;
  cm::ParamSet<float> params;
};

struct cm_trainer {
  std::unique_ptr<cm::Trainer> trainer;
  // Trainer keeps pointers into these.
  const cm_archive* train = nullptr;
  const cm_archive* val = nullptr;
};

namespace {

thread_local std::string g_last_error;

cm_status to_status(cm::ErrorCode code) { return static_cast<cm_status>(static_cast<int>(code) + 1); }

template <typename F>
cm_status guarded(F&& body) {
  try {
    body();
    return CM_OK;
  } catch (const cm::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "Internal: out of memory";
    return CM_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = std::string("Internal: ") + e.what();
    return CM_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) cm::fail(cm::ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  require(out, "output pointer");
  *out = dup_string(s);
}

json parse_json(const char* text, const char* what) {
  if (!text || !*text) return json::object();
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    cm::fail(cm::ErrorCode::kInvalidConfig, std::string(what) + " is not a JSON object");
  }
  return j;
}

cm::RunConfig resolve(const char* config_json) {
  auto config = cm::apply_config(cm::RunConfig{}, parse_json(config_json, "config"));
  config.validate();
  return config;
}

struct EvalOptions {
  cm::ReportFormat format = cm::ReportFormat::kJson;
  std::string direction = "both";
  bool ranks = false;
  cm::FusionConfig fusion;
  std::size_t threads = 1;
};

EvalOptions eval_options(const char* options_json, const cm::RunConfig& config) {
  EvalOptions o;
  o.fusion = config.fusion;
  o.threads = config.threads;
  const json j = parse_json(options_json, "options");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    try {
      if (key == "format") {
        const auto f = v.get<std::string>();
        if (f != "json" && f != "table") cm::fail(cm::ErrorCode::kInvalidArgument, "format must be json or table");
        o.format = f == "json" ? cm::ReportFormat::kJson : cm::ReportFormat::kTable;
      } else if (key == "direction") {
        o.direction = v.get<std::string>();
        if (o.direction != "both") cm::parse_direction(o.direction);
      } else if (key == "ranks") {
        o.ranks = v.get<bool>();
      } else if (key == "alpha") {
        o.fusion.alpha = v.get<double>();
      } else if (key == "threads") {
        o.threads = v.get<std::size_t>();
      } else {
        cm::fail(cm::ErrorCode::kInvalidArgument, "unknown option '" + key + "'");
      }
    } catch (const json::exception&) {
      cm::fail(cm::ErrorCode::kInvalidArgument, "option '" + key + "' has the wrong type");
    }
  }
  if (o.threads < 1) cm::fail(cm::ErrorCode::kInvalidArgument, "threads must be >= 1");
  return o;
}

json loss_json(const cm::LossBreakdown& l) {
  return {{"total", l.total}, {"qv", l.qv}, {"qc", l.qc}, {"aug", l.aug}};
}

}  // namespace

extern "C" {

const char* cm_status_name(cm_status status) {
  if (status == CM_OK) return "Ok";
  if (status < CM_OK || status > CM_INTERNAL) return "Unknown";
  return cm::error_code_name(static_cast<cm::ErrorCode>(static_cast<int>(status) - 1));
}

const char* cm_last_error(void) { return g_last_error.c_str(); }

void cm_free_string(char* s) { std::free(s); }

cm_status cm_default_config(char** out_json) {
  return guarded([&] { put(out_json, cm::to_json(cm::RunConfig{}).dump(2)); });
}

cm_status cm_config_help(char** out_text) {
  return guarded([&] {
    const cm::RunConfig defaults;
    std::string text;
    char line[256];
    std::snprintf(line, sizeof line, "  %-20s %-7s %-10s %s\n", "key", "type", "default", "meaning");
    text += line;
    for (const auto& k : cm::config_keys()) {
      std::snprintf(line, sizeof line, "  %-20s %-7s %-10s %s\n", k.name.c_str(), k.type.c_str(),
                    cm::config_value_text(defaults, k.name).c_str(), k.help.c_str());
      text += line;
    }
    put(out_text, text);
  });
}

cm_status cm_config_resolve(const char* config_json, char** out_json) {
  return guarded([&] { put(out_json, cm::to_json(resolve(config_json)).dump(2)); });
}

cm_status cm_archive_synthesize(const char* config_json, cm_archive** out) {
  return guarded([&] {
    require(out, "output pointer");
    const auto config = resolve(config_json);
    *out = new cm_archive{cm::synthesize(config.synth)};
  });
}

cm_status cm_archive_read(const char* dir, size_t max_words, cm_archive** out) {
  return guarded([&] {
    require(dir, "dir");
    require(out, "output pointer");
    cm::ReadOptions options;
    if (max_words > 0) options.max_words = max_words;
    *out = new cm_archive{cm::read_archive(dir, options)};
  });
}

cm_status cm_archive_write(const cm_archive* archive, const char* dir) {
  return guarded([&] {
    require(archive, "archive");
    require(dir, "dir");
    cm::write_archive(archive->archive, dir);
  });
}

cm_status cm_archive_summary(const cm_archive* archive, char** out_json) {
  return guarded([&] {
    require(archive, "archive");
    const auto& a = archive->archive;
    std::size_t with_captions = 0, captions = 0;
    for (const auto& v : a.videos()) {
      with_captions += v.has_captions();
      captions += v.caption_count();
    }
    const json j = {{"n", a.size()},
                    {"dim", a.dim()},
                    {"split", cm::split_name(a.split())},
                    {"videos_with_captions", with_captions},
                    {"captions", captions}};
    put(out_json, j.dump());
  });
}

void cm_archive_free(cm_archive* archive) { delete archive; }

cm_status cm_filter_captions(const cm_archive* archive, size_t k, char** out_json) {
  return guarded([&] {
    require(archive, "archive");
    put(out_json, cm::filter_captions(archive->archive, k).to_json(archive->archive));
  });
}

cm_status cm_model_create(const char* config_json, size_t dim, cm_model** out) {
  return guarded([&] {
    require(out, "output pointer");
    auto config = resolve(config_json);
    if (dim > 0) config.model.dim = dim;
    config.validate();
    auto params = cm::init_params(config.model, config.train.seed);
    *out = new cm_model{config, std::move(params)};
  });
}

cm_status cm_model_load(const char* checkpoint_dir, cm_model** out) {
  return guarded([&] {
    require(checkpoint_dir, "checkpoint_dir");
    require(out, "output pointer");
    auto state = cm::checkpoint_load(checkpoint_dir);
    *out = new cm_model{state.config, std::move(state.params)};
  });
}

cm_status cm_model_config(const cm_model* model, char** out_json) {
  return guarded([&] {
    require(model, "model");
    put(out_json, cm::to_json(model->config).dump(2));
  });
}

void cm_model_free(cm_model* model) { delete model; }

cm_status cm_trainer_create(const char* config_json, const cm_archive* train, const cm_archive* val,
                            cm_trainer** out) {
  return guarded([&] {
    require(train, "train archive");
    require(out, "output pointer");
    const auto config = resolve(config_json);
    auto t = std::make_unique<cm::Trainer>(config, train->archive, val ? &val->archive : nullptr);
    *out = new cm_trainer{std::move(t), train, val};
  });
}

cm_status cm_trainer_resume(const char* checkpoint_dir, const cm_archive* train, const cm_archive* val,
                            cm_trainer** out) {
  return guarded([&] {
    require(checkpoint_dir, "checkpoint_dir");
    require(train, "train archive");
    require(out, "output pointer");
    auto state = cm::checkpoint_load(checkpoint_dir, train->archive.dim());
    auto t = std::make_unique<cm::Trainer>(std::move(state), train->archive,
                                           val ? &val->archive : nullptr);
    *out = new cm_trainer{std::move(t), train, val};
  });
}

cm_status cm_trainer_run(cm_trainer* trainer, int64_t max_steps, int* finished) {
  return guarded([&] {
    require(trainer, "trainer");
    if (max_steps < 0) {
      trainer->trainer->run();
    } else {
      trainer->trainer->run(static_cast<std::uint64_t>(max_steps));
    }
    if (finished) *finished = trainer->trainer->state().finished() ? 1 : 0;
  });
}

cm_status cm_trainer_report(const cm_trainer* trainer, char** out_json) {
  return guarded([&] {
    require(trainer, "trainer");
    const auto& s = trainer->trainer->state();
    json epochs = json::array();
    for (const auto& e : s.epochs) {
      json j = {{"stage", e.stage}, {"epoch", e.epoch}, {"steps", e.steps}, {"loss", loss_json(e.mean_loss)}};
      j["val_r1"] = e.val_r1 ? json(*e.val_r1) : json(nullptr);
      epochs.push_back(std::move(j));
    }
    json j = {{"config", cm::to_json(s.config)},
              {"step", s.step},
              {"total_steps", trainer->trainer->total_steps()},
              {"finished", s.finished()},
              {"epochs", std::move(epochs)}};
    if (!s.history.empty()) {
      j["first_loss"] = loss_json(s.history.front().loss);
      j["last_loss"] = loss_json(s.history.back().loss);
    }
    put(out_json, j.dump(2));
  });
}

cm_status cm_trainer_save(const cm_trainer* trainer, const char* dir) {
  return guarded([&] {
    require(trainer, "trainer");
    require(dir, "dir");
    cm::checkpoint_save(trainer->trainer->state(), dir);
  });
}

cm_status cm_trainer_model(const cm_trainer* trainer, cm_model** out) {
  return guarded([&] {
    require(trainer, "trainer");
    require(out, "output pointer");
    const auto& s = trainer->trainer->state();
    *out = new cm_model{s.config, s.params};
  });
}

void cm_trainer_free(cm_trainer* trainer) { delete trainer; }

cm_status cm_evaluate(const cm_model* model, const cm_archive* archive, const char* options_json,
                      char** out_text) {
  return guarded([&] {
    require(model, "model");
    require(archive, "archive");
    const auto o = eval_options(options_json, model->config);
    const cm::Scorer scorer(model->config.model, model->params, archive->archive, o.fusion, o.threads);
    const auto scores = scorer.score_matrix();
    std::vector<cm::RetrievalReport> reports;
    if (o.direction != "v2t") reports.push_back(cm::report_from_scores(scores, cm::Direction::kTextToVideo));
    if (o.direction != "t2v") {
      reports.push_back(cm::report_from_scores(cm::kernels::transpose(scores), cm::Direction::kVideoToText));
    }
    put(out_text, cm::emit_reports(reports, o.format, o.ranks));
  });
}

cm_status cm_retrieve(const cm_model* model, const cm_archive* archive, const char* query_id, size_t k,
                      const char* options_json, char** out_json) {
  return guarded([&] {
    require(model, "model");
    require(archive, "archive");
    require(query_id, "query_id");
    const auto o = eval_options(options_json, model->config);
    const auto& queries = archive->archive.queries();
    std::size_t index = queries.size();
    for (std::size_t i = 0; i < queries.size(); ++i)
      if (queries[i].id == query_id) index = i;
    if (index == queries.size()) {
      cm::fail(cm::ErrorCode::kInvalidArgument, std::string("no query with id '") + query_id + "'");
    }
    const cm::Scorer scorer(model->config.model, model->params, archive->archive, o.fusion, o.threads);
    json out = json::array();
    for (const auto& [id, score] : scorer.retrieve_topk(index, k)) {
      out.push_back({{"id", id}, {"score", static_cast<double>(score)}});
    }
    put(out_json, out.dump());
  });
}

cm_status cm_ablate(const cm_archive* train, const cm_archive* val, const char* config_json,
                    const char* options_json, char** out_text) {
  return guarded([&] {
    require(train, "train archive");
    require(val, "val archive");
    const auto base = resolve(config_json);
    const json o = parse_json(options_json, "options");
    std::vector<std::uint64_t> seeds = {base.train.seed};
    bool table = false;
    for (auto it = o.begin(); it != o.end(); ++it) {
      try {
        if (it.key() == "seeds") {
          seeds = it.value().get<std::vector<std::uint64_t>>();
        } else if (it.key() == "format") {
          table = it.value().get<std::string>() == "table";
        } else {
          cm::fail(cm::ErrorCode::kInvalidArgument, "unknown option '" + it.key() + "'");
        }
      } catch (const json::exception&) {
        cm::fail(cm::ErrorCode::kInvalidArgument, "option '" + it.key() + "' has the wrong type");
      }
    }
    const auto rows = cm::run_ablation(train->archive, val->archive, base, cm::default_ablation_grid(), seeds);
    std::string text;
    char line[256];
    if (table) {
      std::snprintf(line, sizeof line, "%-28s %9s %9s %9s %9s %9s\n", "config", "R@1", "R@5", "R@10", "MdR",
                    "MnR");
      text += line;
    }
    for (const auto& row : rows) {
      double r5 = 0, r10 = 0, mdr = 0, mnr = 0;
      for (const auto& r : row.per_seed) {
        r5 += r.r5;
        r10 += r.r10;
        mdr += r.mdr;
        mnr += r.mnr;
      }
      const double n = static_cast<double>(row.per_seed.size());
      if (table) {
        std::snprintf(line, sizeof line, "%-28s %9.4f %9.4f %9.4f %9.4f %9.4f\n", row.name.c_str(), row.mean_r1,
                      r5 / n, r10 / n, mdr / n, mnr / n);
        text += line;
      } else {
        json per_seed = json::array();
        for (const auto& r : row.per_seed) per_seed.push_back(r.r1);
        const json j = {{"name", row.name}, {"r1", row.mean_r1}, {"r5", r5 / n}, {"r10", r10 / n},
                        {"mdr", mdr / n},   {"mnr", mnr / n},    {"r1_per_seed", per_seed}};
        text += j.dump() + "\n";
      }
    }
    put(out_text, text);
  });
}

cm_status cm_gradcheck(int f64, char** out_text, int* passed) {
  return guarded([&] {
    cm::GradcheckOptions options;
    options.f64 = f64 != 0;
    const auto report = cm::run_gradcheck(options);
    if (passed) *passed = report.passed ? 1 : 0;
    put(out_text, cm::format_gradcheck(report));
  });
}

}  // extern "C"
