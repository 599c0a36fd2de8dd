/* Copyright 2026 The SLT Baseline Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "slt/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "CLI11.hpp"
#include "slt/config_io.hpp"
#include "slt/error.hpp"

namespace slt::cli {

namespace fs = std::filesystem;
using pipeline::Stage;

namespace {

const char* const kStageSections[] = {"pretrain_visual", "pretrain_translation", "train_joint"};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write " + path.string());
  file << text;
  if (!file) throw IoError("short write to " + path.string());
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

std::optional<std::uint64_t> seed_from_env() {
  const char* raw = std::getenv("SLT_SEED");
  if (!raw || !*raw) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(raw, &used);
    if (used != std::string(raw).size() || std::string(raw).front() == '-') throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("SLT_SEED must be a non-negative integer, got '") + raw + "'");
  }
}

RunConfig load_run_config(const std::string& path) {
  RunConfig c = path.empty() ? RunConfig{} : RunConfig::load(path);
  if (auto seed = seed_from_env()) c.override_seed(*seed);
  return c;
}

// ---------------------------------------------------------------------------

struct Common {
  std::string config, data, out;
  std::optional<int> epochs;
};

int gen_data(const Common& o, std::ostream& out, std::ostream& err) {
  const auto cfg = load_run_config(o.config);
  const auto corpus = data::generate_corpus(cfg.data, cfg.n_train, cfg.n_dev, cfg.n_test);
  make_dir(o.out);
  data::write_split(o.out, "train", corpus.train);
  data::write_split(o.out, "dev", corpus.dev);
  data::write_split(o.out, "test", corpus.test);
  write_text(fs::path(o.out) / "config.json", cfg.to_json().dump(2) + "\n");
  err << "wrote " << corpus.train.size() + corpus.dev.size() + corpus.test.size() << " samples to " << o.out << "\n";
  nlohmann::ordered_json counts;
  counts["train"] = corpus.train.size();
  counts["dev"] = corpus.dev.size();
  counts["test"] = corpus.test.size();
  out << counts.dump() << "\n";
  return kOk;
}

struct JointFlags {
  std::string init_visual, init_translation;
  bool allow_scratch = false;
};

int train(Stage stage, const Common& o, const JointFlags& joint, std::ostream& out, std::ostream& err) {
  auto cfg = load_run_config(o.config);
  auto train_cfg = cfg.train_config(stage);
  if (o.epochs) train_cfg.epochs = *o.epochs;
  train_cfg.validate();

  // Check the cheap preconditions before loading anything large.
  if (stage == Stage::train_joint && !joint.allow_scratch &&
      (joint.init_visual.empty() || joint.init_translation.empty())) {
    throw PipelineOrderError("train-joint needs --init-visual and --init-translation (or --allow-scratch)");
  }
  const auto corpus = data::load_splits(o.data);
  pipeline::Logger log = [&](const std::string& line) { err << line << "\n"; };

  pipeline::TrainResult result = [&] {
    switch (stage) {
      case Stage::pretrain_visual: return pipeline::pretrain_visual(corpus, cfg.model, train_cfg, log);
      case Stage::pretrain_translation: return pipeline::pretrain_translation(corpus, cfg.model, train_cfg, log);
      case Stage::train_joint: {
        pipeline::JointInit init;
        init.allow_scratch = joint.allow_scratch;
        if (!joint.init_visual.empty()) init.visual = pipeline::load_checkpoint(joint.init_visual);
        if (!joint.init_translation.empty()) init.translation = pipeline::load_checkpoint(joint.init_translation);
        return pipeline::train_joint(corpus, cfg.model, train_cfg, std::move(init), log);
      }
    }
    throw ArgumentError("unknown stage");
  }();

  make_dir(o.out);
  const auto checkpoint = fs::path(o.out) / "checkpoint.sltc";
  pipeline::save_checkpoint(result.model, checkpoint.string());
  std::string metrics;
  for (const auto& rec : result.history) metrics += rec.to_json().dump() + "\n";
  write_text(fs::path(o.out) / "metrics.jsonl", metrics);
  auto effective = cfg.to_json();
  effective["train"] = pipeline::to_json(train_cfg);
  write_text(fs::path(o.out) / "config.json", effective.dump(2) + "\n");

  const auto& best = result.history.at(static_cast<std::size_t>(result.best_epoch));
  nlohmann::ordered_json summary;
  summary["stage"] = pipeline::to_string(stage);
  summary["checkpoint"] = checkpoint.string();
  summary["epochs"] = train_cfg.effective_epochs();
  summary["best_epoch"] = result.best_epoch;
  if (best.dev_wer) summary["dev_wer"] = *best.dev_wer;
  if (best.dev_bleu4) summary["dev_bleu4"] = *best.dev_bleu4;
  summary["skipped"] = result.skipped;
  out << summary.dump() << "\n";
  return kOk;
}

struct EvalFlags {
  std::string task, checkpoint, data, split = "test";
  int beam_width = 4;
  double length_penalty = 1.0;
  std::optional<int> ctc_beam_width;
};

int evaluate(const EvalFlags& f, std::ostream& out) {
  const auto task = metrics::task_from_string(f.task);
  if (f.split != "dev" && f.split != "test") throw ArgumentError("--split must be dev or test");
  if (f.beam_width < 1) throw ArgumentError("--beam-width must be >= 1");
  if (f.ctc_beam_width && *f.ctc_beam_width < 1) throw ArgumentError("--ctc-beam-width must be >= 1");
  auto model = pipeline::load_checkpoint(f.checkpoint);
  model.require(task);
  const auto corpus = data::load_splits(f.data);
  pipeline::EvalOptions opts;
  opts.beam_width = f.beam_width;
  opts.length_penalty = f.length_penalty;
  opts.ctc_beam_width = f.ctc_beam_width;
  out << pipeline::evaluate(model, corpus, task, f.split, opts).to_json().dump() << "\n";
  return kOk;
}

int exit_code(std::ostream& err, const std::exception& e, int code) {
  err << "error: " << e.what() << "\n";
  return code;
}

}  // namespace

// ---------------------------------------------------------------------------

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  config::ObjectReader r(j, "config");
  if (r.has("data")) {
    r.seen("data");
    nlohmann::json d = r.at("data");
    if (!d.is_object()) throw ConfigError("config.data must be a JSON object");
    config::ObjectReader sizes(d, "config.data");
    sizes.field("n_train", c.n_train);
    sizes.field("n_dev", c.n_dev);
    sizes.field("n_test", c.n_test);
    if (c.n_train < 1 || c.n_dev < 1 || c.n_test < 1) throw ConfigError("config.data split sizes must be >= 1");
    for (const char* k : {"n_train", "n_dev", "n_test"}) d.erase(k);
    config::read(d, c.data, "config.data");
  }
  if (r.has("model")) {
    r.seen("model");
    c.model = pipeline::model_config_from_json(r.at("model"), "config.model");
  }
  if (r.has("train")) {
    r.seen("train");
    c.train = r.at("train");
    if (!c.train.is_object()) throw ConfigError("config.train must be a JSON object");
    if (c.train.contains("stage")) throw ConfigError("config.train.stage is set by the command, not the config");
  }
  r.finish();
  // Surface unknown or malformed training keys now rather than at train time.
  for (auto s : {Stage::pretrain_visual, Stage::pretrain_translation, Stage::train_joint}) c.train_config(s);
  c.data.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

pipeline::TrainConfig RunConfig::train_config(Stage stage) const {
  pipeline::TrainConfig c;
  c.stage = stage;
  nlohmann::json shared = train;
  for (const char* s : kStageSections) shared.erase(s);
  pipeline::read(shared, c, "config.train");
  const auto name = pipeline::to_string(stage);
  if (train.contains(name)) {
    const auto& section = train.at(name);
    if (section.is_object() && section.contains("stage")) {
      throw ConfigError("config.train." + name + ".stage is set by the command, not the config");
    }
    pipeline::read(section, c, "config.train." + name);
  }
  c.stage = stage;
  return c;
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  auto d = config::to_json(data);
  d["n_train"] = n_train;
  d["n_dev"] = n_dev;
  d["n_test"] = n_test;
  j["data"] = d;
  j["model"] = pipeline::to_json(model);
  nlohmann::ordered_json t;
  for (auto s : {Stage::pretrain_visual, Stage::pretrain_translation, Stage::train_joint}) {
    auto stage = pipeline::to_json(train_config(s));
    stage.erase("stage");
    t[pipeline::to_string(s)] = stage;
  }
  j["train"] = t;
  return j;
}

void RunConfig::override_seed(std::uint64_t seed) {
  data.seed = seed;
  train["seed"] = seed;
  for (const char* s : kStageSections) {
    if (train.contains(s) && train[s].is_object()) train[s].erase("seed");
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sign language translation baseline: data generation, staged training and evaluation", "slt"};
  app.require_subcommand(1);

  Common gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic train/dev/test corpus");
  gen_cmd->add_option("--config", gen.config, "Run configuration (JSON)");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  struct StageCommand {
    Stage stage;
    CLI::App* cmd;
    Common opts;
  };
  std::vector<StageCommand> stages;
  stages.reserve(3);
  JointFlags joint;
  for (auto [name, stage, help] :
       {std::tuple{"pretrain-visual", Stage::pretrain_visual, "Pretrain the visual encoder with CTC"},
        std::tuple{"pretrain-translation", Stage::pretrain_translation, "Pretrain the gloss-to-text translator"},
        std::tuple{"train-joint", Stage::train_joint, "Joint sign-to-text training"}}) {
    stages.push_back({stage, app.add_subcommand(name, help), {}});
    auto& s = stages.back();
    s.cmd->add_option("--config", s.opts.config, "Run configuration (JSON)");
    s.cmd->add_option("--data", s.opts.data, "Corpus directory from gen-data")->required();
    s.cmd->add_option("--out", s.opts.out, "Output directory")->required();
    s.cmd->add_option("--epochs", s.opts.epochs, "Override the number of epochs");
    if (stage == Stage::train_joint) {
      s.cmd->add_option("--init-visual", joint.init_visual, "Checkpoint from pretrain-visual");
      s.cmd->add_option("--init-translation", joint.init_translation, "Checkpoint from pretrain-translation");
      s.cmd->add_flag("--allow-scratch", joint.allow_scratch, "Train missing parts from scratch");
    }
  }

  EvalFlags ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint; prints one JSON report");
  eval_cmd->add_option("--task", ev.task, "sign2gloss, gloss2text, sign2gloss2text or sign2text")->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", ev.data, "Corpus directory")->required();
  eval_cmd->add_option("--beam-width", ev.beam_width, "Translation beam width")->capture_default_str();
  eval_cmd->add_option("--length-penalty", ev.length_penalty, "Length penalty exponent")->capture_default_str();
  eval_cmd->add_option("--ctc-beam-width", ev.ctc_beam_width, "Fixed CTC beam width (default: dev sweep 1-10)");
  eval_cmd->add_option("--split", ev.split, "dev or test")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (gen_cmd->parsed()) return gen_data(gen, out, err);
    for (const auto& s : stages) {
      if (s.cmd->parsed()) return train(s.stage, s.opts, joint, out, err);
    }
    if (eval_cmd->parsed()) return evaluate(ev, out);
    return kUsageError;
  } catch (const IoError& e) {
    return exit_code(err, e, kEnvironmentError);
  } catch (const ParseError& e) {
    return exit_code(err, e, kEnvironmentError);
  } catch (const CorruptionError& e) {
    return exit_code(err, e, kEnvironmentError);
  } catch (const UnsupportedVersionError& e) {
    return exit_code(err, e, kEnvironmentError);
  } catch (const ConfigError& e) {
    return exit_code(err, e, kUsageError);
  } catch (const ArgumentError& e) {
    return exit_code(err, e, kUsageError);
  } catch (const DimensionError& e) {
    return exit_code(err, e, kUsageError);
  } catch (const RankError& e) {
    return exit_code(err, e, kUsageError);
  } catch (const VocabularyError& e) {
    return exit_code(err, e, kUsageError);
  } catch (const CheckpointRequiredError& e) {
    return exit_code(err, e, kUsageError);
  } catch (const PipelineOrderError& e) {
    return exit_code(err, e, kUsageError);
  } catch (const std::exception& e) {
    return exit_code(err, e, kEnvironmentError);
  }
}

}  // namespace slt::cli
