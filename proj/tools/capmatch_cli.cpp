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

// capmatch command-line front end over the C API.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "capmatch/capmatch.h"
#include "json.hpp"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

int exit_code(cm_status s) {
  switch (s) {
    case CM_OK:
      return kExitOk;
    case CM_INVALID_ARGUMENT:
    case CM_INVALID_CONFIG:
      return kExitUsage;
    case CM_DETACHED_LOSS:
    case CM_DOUBLE_BACKWARD:
    case CM_INTERNAL:
      return kExitInternal;
    default:
      return kExitData;
  }
}

struct Failure {
  cm_status status;
};

void check(cm_status s) {
  if (s != CM_OK) throw Failure{s};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  cm_free_string(s);
  return out;
}

struct ArchiveDeleter {
  void operator()(cm_archive* a) const { cm_archive_free(a); }
};
struct ModelDeleter {
  void operator()(cm_model* m) const { cm_model_free(m); }
};
struct TrainerDeleter {
  void operator()(cm_trainer* t) const { cm_trainer_free(t); }
};
using ArchivePtr = std::unique_ptr<cm_archive, ArchiveDeleter>;
using ModelPtr = std::unique_ptr<cm_model, ModelDeleter>;
using TrainerPtr = std::unique_ptr<cm_trainer, TrainerDeleter>;

ArchivePtr open_archive(const std::string& dir, std::size_t max_words = 0) {
  cm_archive* a = nullptr;
  check(cm_archive_read(dir.c_str(), max_words, &a));
  return ArchivePtr(a);
}

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot write " + path);
  out << text;
}

// Every config key as a flag on a subcommand, layered as
// defaults < --config file < CAPMATCH_THREADS < flags.
class ConfigFlags {
 public:
  explicit ConfigFlags(const json& defaults) : defaults_(defaults) {}

  void attach(CLI::App* app) {
    app->add_option("--config", config_path_, "JSON file of config keys");
    for (auto it = defaults_.begin(); it != defaults_.end(); ++it) {
      const std::string key = it.key();
      std::string names = "--" + key;
      const std::string dashed = dash(key);
      if (dashed != key) names += ",--" + dashed;
      const std::string shown = it.value().is_string() ? it.value().get<std::string>() : it.value().dump();
      app->add_option(names, values_[key], "config key '" + key + "' (default: " + shown + ")");
    }
  }

  bool given(const std::string& key) const { return !values_.at(key).empty(); }

  // Patch over the defaults; resolution and validation happen in the library.
  json patch() const {
    json j = json::object();
    if (!config_path_.empty()) {
      j = json::parse(read_text(config_path_), nullptr, false);
      if (j.is_discarded() || !j.is_object()) throw UsageError(config_path_ + " is not a JSON object");
    }
    if (const char* env = std::getenv("CAPMATCH_THREADS"); env && *env) j["threads"] = typed("threads", env);
    for (const auto& [key, text] : values_)
      if (!text.empty()) j[key] = typed(key, text);
    return j;
  }

 private:
  static std::string dash(std::string s) {
    for (auto& c : s)
      if (c == '_') c = '-';
    return s;
  }

  json typed(const std::string& key, const std::string& text) const {
    const json& d = defaults_.at(key);
    if (d.is_string()) return text;
    if (d.is_boolean()) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw UsageError("--" + key + " expects true or false");
    }
    json v = json::parse(text, nullptr, false);
    if (v.is_discarded() || !v.is_number() || (d.is_number_integer() && !v.is_number_integer())) {
      throw UsageError("--" + key + " expects " + (d.is_number_integer() ? "an integer" : "a number") +
                       ", got '" + text + "'");
    }
    return v;
  }

  json defaults_;
  std::string config_path_;
  std::map<std::string, std::string> values_;
};

json eval_options(const ConfigFlags& flags, const std::string& format, const std::string& direction,
                  bool ranks) {
  json o = {{"format", format}, {"direction", direction}, {"ranks", ranks}};
  const json p = flags.patch();
  for (const char* key : {"alpha", "threads"})
    if (p.contains(key)) o[key] = p[key];
  return o;
}

ModelPtr make_model(const std::string& checkpoint, const ConfigFlags& flags, const cm_archive* archive) {
  cm_model* m = nullptr;
  if (!checkpoint.empty()) {
    check(cm_model_load(checkpoint.c_str(), &m));
  } else {
    char* summary = nullptr;
    check(cm_archive_summary(archive, &summary));
    const auto dim = json::parse(take(summary)).at("dim").get<std::size_t>();
    check(cm_model_create(flags.patch().dump().c_str(), dim, &m));
  }
  return ModelPtr(m);
}

std::size_t max_words_of(const ConfigFlags& flags) {
  const json p = flags.patch();
  return p.contains("max_words") && p["max_words"].is_number_unsigned() ? p["max_words"].get<std::size_t>() : 0;
}

}  // namespace

int main(int argc, char** argv) {
  char* defaults_text = nullptr;
  if (cm_default_config(&defaults_text) != CM_OK) {
    std::cerr << "error: " << cm_last_error() << "\n";
    return kExitInternal;
  }
  const json defaults = json::parse(take(defaults_text));
  char* help_text = nullptr;
  cm_config_help(&help_text);

  CLI::App app{"capmatch: caption-enhanced text-video retrieval on precomputed embeddings"};
  app.require_subcommand(1);
  app.footer("Config keys (name, type, default, meaning):\n" + take(help_text));

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic archive");
  ConfigFlags synth_flags(defaults);
  synth_flags.attach(synth);
  std::string synth_out;
  synth->add_option("--out", synth_out, "archive directory")->required();

  // filter-captions
  auto* filter = app.add_subcommand("filter-captions", "top-k captions per video by query similarity");
  std::string filter_archive, filter_out;
  std::size_t filter_k = 1;
  filter->add_option("--archive", filter_archive, "train archive directory")->required();
  filter->add_option("--k", filter_k, "captions kept per video")->capture_default_str();
  filter->add_option("--out", filter_out, "output JSON file (stdout when absent)");

  // train
  auto* train = app.add_subcommand("train", "two-stage training");
  ConfigFlags train_flags(defaults);
  train_flags.attach(train);
  std::string train_archive, train_val, train_out, train_resume;
  long long max_steps = -1;
  train->add_option("--archive", train_archive, "train archive directory")->required();
  train->add_option("--val", train_val, "validation archive directory");
  train->add_option("--out", train_out, "checkpoint directory")->required();
  train->add_option("--resume", train_resume, "continue from this checkpoint");
  train->add_option("--max-steps", max_steps, "stop after this many batches (-1: run to the end)")
      ->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "retrieval metrics on an archive");
  ConfigFlags eval_flags(defaults);
  eval_flags.attach(eval);
  std::string eval_archive, eval_checkpoint, eval_format = "json", eval_direction = "both";
  bool eval_ranks = false;
  eval->add_option("--archive", eval_archive, "archive directory")->required();
  eval->add_option("--checkpoint", eval_checkpoint, "trained checkpoint (untrained model when absent)");
  eval->add_option("--format", eval_format, "json or table")
      ->check(CLI::IsMember({"json", "table"}))
      ->capture_default_str();
  eval->add_option("--direction", eval_direction, "t2v, v2t or both")
      ->check(CLI::IsMember({"t2v", "v2t", "both"}))
      ->capture_default_str();
  eval->add_flag("--ranks", eval_ranks, "include per-query ranks");

  // retrieve
  auto* retrieve = app.add_subcommand("retrieve", "top-k videos for one query");
  ConfigFlags retrieve_flags(defaults);
  retrieve_flags.attach(retrieve);
  std::string retrieve_archive, retrieve_checkpoint, retrieve_query;
  std::size_t retrieve_k = 10;
  retrieve->add_option("--archive", retrieve_archive, "archive directory")->required();
  retrieve->add_option("--checkpoint", retrieve_checkpoint, "trained checkpoint (untrained model when absent)");
  retrieve->add_option("--query", retrieve_query, "query id")->required();
  retrieve->add_option("--k", retrieve_k, "results to return")->capture_default_str();

  // ablate
  auto* ablate = app.add_subcommand("ablate", "component grid over both matching modes");
  ConfigFlags ablate_flags(defaults);
  ablate_flags.attach(ablate);
  std::string ablate_train, ablate_val, ablate_format = "table";
  std::vector<std::uint64_t> ablate_seeds;
  ablate->add_option("--train", ablate_train, "train archive directory")->required();
  ablate->add_option("--val", ablate_val, "held-out archive directory")->required();
  ablate->add_option("--seeds", ablate_seeds, "training seeds (default: the config seed)")->delimiter(',');
  ablate->add_option("--format", ablate_format, "json or table")
      ->check(CLI::IsMember({"json", "table"}))
      ->capture_default_str();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  bool f32 = false;
  gradcheck->add_flag("--f64", "64-bit arithmetic (default)");
  gradcheck->add_flag("--f32", f32, "32-bit arithmetic with a loose threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) {
      cm_archive* a = nullptr;
      check(cm_archive_synthesize(synth_flags.patch().dump().c_str(), &a));
      ArchivePtr archive(a);
      check(cm_archive_write(archive.get(), synth_out.c_str()));
      char* summary = nullptr;
      check(cm_archive_summary(archive.get(), &summary));
      write_text("", take(summary));
    } else if (filter->parsed()) {
      auto archive = open_archive(filter_archive);
      char* out = nullptr;
      check(cm_filter_captions(archive.get(), filter_k, &out));
      write_text(filter_out, take(out));
    } else if (train->parsed()) {
      auto archive = open_archive(train_archive, max_words_of(train_flags));
      ArchivePtr val;
      if (!train_val.empty()) val = open_archive(train_val, max_words_of(train_flags));
      cm_trainer* t = nullptr;
      if (!train_resume.empty()) {
        check(cm_trainer_resume(train_resume.c_str(), archive.get(), val.get(), &t));
      } else {
        check(cm_trainer_create(train_flags.patch().dump().c_str(), archive.get(), val.get(), &t));
      }
      TrainerPtr trainer(t);
      int finished = 0;
      check(cm_trainer_run(trainer.get(), max_steps, &finished));
      check(cm_trainer_save(trainer.get(), train_out.c_str()));
      char* report = nullptr;
      check(cm_trainer_report(trainer.get(), &report));
      write_text("", take(report));
    } else if (eval->parsed()) {
      auto archive = open_archive(eval_archive, max_words_of(eval_flags));
      auto model = make_model(eval_checkpoint, eval_flags, archive.get());
      const auto options = eval_options(eval_flags, eval_format, eval_direction, eval_ranks);
      char* out = nullptr;
      check(cm_evaluate(model.get(), archive.get(), options.dump().c_str(), &out));
      write_text("", take(out));
    } else if (retrieve->parsed()) {
      auto archive = open_archive(retrieve_archive, max_words_of(retrieve_flags));
      auto model = make_model(retrieve_checkpoint, retrieve_flags, archive.get());
      const auto options = eval_options(retrieve_flags, "json", "both", false);
      json rest = options;
      rest.erase("format");
      rest.erase("direction");
      rest.erase("ranks");
      char* out = nullptr;
      check(cm_retrieve(model.get(), archive.get(), retrieve_query.c_str(), retrieve_k, rest.dump().c_str(), &out));
      write_text("", take(out));
    } else if (ablate->parsed()) {
      auto train_a = open_archive(ablate_train, max_words_of(ablate_flags));
      auto val_a = open_archive(ablate_val, max_words_of(ablate_flags));
      json options = {{"format", ablate_format}};
      if (!ablate_seeds.empty()) options["seeds"] = ablate_seeds;
      char* out = nullptr;
      check(cm_ablate(train_a.get(), val_a.get(), ablate_flags.patch().dump().c_str(), options.dump().c_str(), &out));
      write_text("", take(out));
    } else if (gradcheck->parsed()) {
      char* out = nullptr;
      int passed = 0;
      check(cm_gradcheck(f32 ? 0 : 1, &out, &passed));
      write_text("", take(out));
      if (!passed) {
        std::cerr << "error: gradient check exceeded its threshold\n";
        return kExitInternal;
      }
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << cm_last_error() << "\n";
    return exit_code(f.status);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}
