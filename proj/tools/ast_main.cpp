// Copyright 2026 The ast Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Command line: simulate | train <stage> | transfer | evaluate | rerun.
// Exit code 0 on success; on failure one machine-parsable line on stderr:
//   error category=<token> message="..."

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ast/config.h"
#include "ast/error.h"
#include "ast/pipeline.h"

using namespace ast;
using nlohmann::json;

namespace {

const char* category_token(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kUsage: return "usage";
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kInput: return "input";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kDimension: return "dimension";
    case ErrorCategory::kNumeric: return "numeric";
    case ErrorCategory::kDependency: return "dependency";
  }
  return "internal";
}

struct CommonFlags {
  std::string config_path;
  std::optional<uint64_t> seed_flag;
};

RunConfig resolve_config(const CommonFlags& flags) {
  RunConfig cfg;
  if (const char* env = std::getenv("AST_SEED"); env && *env)
    cfg.seed = std::strtoull(env, nullptr, 10);
  if (!flags.config_path.empty()) {
    const uint64_t env_seed = cfg.seed;
    cfg = RunConfig::load_file(flags.config_path);
    // a config file without an explicit seed keeps the env default
    std::ifstream f(flags.config_path);
    json j;
    f >> j;
    if (!j.contains("seed")) cfg.seed = env_seed;
  }
  if (flags.seed_flag) cfg.seed = *flags.seed_flag;
  return cfg;
}

int do_simulate(const RunConfig& cfg, const std::string& out_dir) {
  run_simulate(cfg, out_dir);
  write_run_log(out_dir, "simulate", {{"out", out_dir}}, cfg);
  return 0;
}

int do_train(const RunConfig& cfg, const std::string& stage,
             const std::string& data_dir, const std::string& ckpt_root) {
  CkptPaths ckpt{ckpt_root};
  if (stage == "vae") {
    train_vae(cfg, data_dir, ckpt);
  } else if (stage == "scene") {
    train_scene(cfg, data_dir, ckpt);
  } else if (stage == "probes") {
    train_probes(cfg, data_dir, ckpt);
  } else if (stage == "ldm") {
    train_ldm(cfg, data_dir, ckpt);
  } else {
    fail(ErrorCategory::kUsage,
         "unknown stage '" + stage + "' (expected vae|scene|probes|ldm)");
  }
  write_run_log(ckpt_root, "train_" + stage,
                {{"stage", stage}, {"data", data_dir}, {"ckpt", ckpt_root}}, cfg);
  return 0;
}

int do_transfer(const RunConfig& cfg, const TransferArgs& args) {
  auto res = run_transfer(cfg, args);
  json a = {{"bundle", args.bundle_dir}, {"content", args.content_wav},
            {"w_ref", args.w_ref},       {"w_cont", args.w_cont},
            {"seed", args.seed},         {"out", args.out_dir}};
  if (args.ref_audio) a["ref_audio"] = *args.ref_audio;
  if (args.ref_text) a["ref_text"] = *args.ref_text;
  write_run_log(args.out_dir, "transfer", a, cfg);
  std::printf("wrote %s and %s\n", res.wav_path.c_str(), res.mel_path.c_str());
  return 0;
}

int do_evaluate(const RunConfig& cfg, const EvaluateArgs& args) {
  run_evaluate(cfg, args);
  write_run_log(args.out_dir, "evaluate",
                {{"bundle", args.bundle_dir},
                 {"probes", args.probes_root},
                 {"manifest", args.manifest_path},
                 {"out", args.out_dir},
                 {"sanity", args.ground_truth_as_generated}},
                cfg);
  return 0;
}

int do_rerun(const std::string& log_path) {
  std::ifstream f(log_path);
  require(f.good(), ErrorCategory::kIo, "cannot open run log " + log_path);
  json j;
  f >> j;
  const auto cfg = RunConfig::from_json(j.at("config"));
  const std::string command = j.at("command").get<std::string>();
  const json& a = j.at("args");
  if (command == "simulate") {
    return do_simulate(cfg, a.at("out").get<std::string>());
  }
  if (command.rfind("train_", 0) == 0) {
    return do_train(cfg, a.at("stage").get<std::string>(),
                    a.at("data").get<std::string>(),
                    a.at("ckpt").get<std::string>());
  }
  if (command == "transfer") {
    TransferArgs t;
    t.bundle_dir = a.at("bundle").get<std::string>();
    t.content_wav = a.at("content").get<std::string>();
    if (a.contains("ref_audio")) t.ref_audio = a.at("ref_audio").get<std::string>();
    if (a.contains("ref_text")) t.ref_text = a.at("ref_text").get<std::string>();
    t.w_ref = a.at("w_ref").get<float>();
    t.w_cont = a.at("w_cont").get<float>();
    t.seed = a.at("seed").get<uint64_t>();
    t.out_dir = a.at("out").get<std::string>();
    return do_transfer(cfg, t);
  }
  if (command == "evaluate") {
    EvaluateArgs e;
    e.bundle_dir = a.at("bundle").get<std::string>();
    e.probes_root = a.at("probes").get<std::string>();
    e.manifest_path = a.at("manifest").get<std::string>();
    e.out_dir = a.at("out").get<std::string>();
    e.ground_truth_as_generated = a.value("sanity", false);
    return do_evaluate(cfg, e);
  }
  fail(ErrorCategory::kInput, "unrecognized command in run log: " + command);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acoustic scene transfer at desk scale"};
  app.require_subcommand(1);

  CommonFlags flags;
  app.add_option("--config", flags.config_path, "JSON config file");
  uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "global seed override");

  // simulate
  auto* sim = app.add_subcommand("simulate", "synthesize the dataset");
  std::string sim_out = "data";
  sim->add_option("--out", sim_out, "output dataset directory");
  int train_per_cell = -1, eval_per_cell = -1, mismatched_per_cell = -1;
  sim->add_option("--train-per-cell", train_per_cell, "training items per scenario");
  sim->add_option("--eval-per-cell", eval_per_cell, "eval items per scenario");
  sim->add_option("--mismatched-per-cell", mismatched_per_cell,
                  "diagnostic gender-mismatched eval items per scenario");
  float clip_seconds = -1.f;
  sim->add_option("--clip-seconds", clip_seconds, "clip length in seconds");

  // train
  auto* train = app.add_subcommand("train", "train one stage");
  std::string stage, data_dir = "data", ckpt_root = "ckpt";
  train->add_option("stage", stage, "vae | scene | probes | ldm")->required();
  train->add_option("--data", data_dir, "dataset directory");
  train->add_option("--ckpt", ckpt_root, "checkpoint root");
  int steps_override = -1;
  train->add_option("--steps", steps_override, "step-count override for the stage");

  // transfer
  auto* transfer = app.add_subcommand("transfer", "run acoustic scene transfer");
  TransferArgs targs;
  std::string ref_audio, ref_text;
  transfer->add_option("--bundle", targs.bundle_dir, "trained bundle directory")
      ->required();
  transfer->add_option("--content", targs.content_wav, "content prompt wav")
      ->required();
  transfer->add_option("--ref-audio", ref_audio, "reference prompt wav");
  transfer->add_option("--ref-text", ref_text, "reference prompt caption");
  transfer->add_option("--w-ref", targs.w_ref, "reference guidance weight");
  transfer->add_option("--w-cont", targs.w_cont, "content guidance weight");
  uint64_t transfer_seed = 0;
  auto* tseed = transfer->add_option("--seed", transfer_seed, "sampling seed");
  transfer->add_option("--out", targs.out_dir, "output directory");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "run the scenario metrics");
  EvaluateArgs eargs;
  evaluate->add_option("--bundle", eargs.bundle_dir, "trained bundle directory")
      ->required();
  evaluate->add_option("--probes", eargs.probes_root, "checkpoint root with probes")
      ->required();
  evaluate->add_option("--manifest", eargs.manifest_path, "eval manifest path")
      ->required();
  evaluate->add_option("--out", eargs.out_dir, "report output directory");
  int max_per_scenario = -1;
  evaluate->add_option("--max-per-scenario", max_per_scenario,
                       "cap items per scenario cell");
  evaluate->add_flag("--sanity", eargs.ground_truth_as_generated,
                     "score ground-truth targets instead of generating");

  // rerun
  auto* rerun = app.add_subcommand("rerun", "replay a command from its run log");
  std::string log_path;
  rerun->add_option("log", log_path, "run_*.json file")->required();

  try {
    app.parse(argc, argv);
    if (*seed_opt) flags.seed_flag = seed_value;
    RunConfig cfg = resolve_config(flags);

    if (sim->parsed()) {
      if (train_per_cell >= 0) cfg.dataset.train_per_cell = train_per_cell;
      if (eval_per_cell >= 0) cfg.dataset.eval_per_cell = eval_per_cell;
      if (mismatched_per_cell >= 0)
        cfg.dataset.eval_mismatched_per_cell = mismatched_per_cell;
      if (clip_seconds > 0.f) cfg.clip_seconds = clip_seconds;
      return do_simulate(cfg, sim_out);
    }
    if (train->parsed()) {
      if (steps_override >= 0) {
        if (stage == "vae") cfg.vae.steps = steps_override;
        if (stage == "scene") cfg.scene.steps = steps_override;
        if (stage == "probes") cfg.probes.steps = steps_override;
        if (stage == "ldm") cfg.ldm.steps = steps_override;
      }
      return do_train(cfg, stage, data_dir, ckpt_root);
    }
    if (transfer->parsed()) {
      if (!ref_audio.empty()) targs.ref_audio = ref_audio;
      if (!ref_text.empty()) targs.ref_text = ref_text;
      targs.w_ref = transfer->count("--w-ref") ? targs.w_ref : cfg.infer.w_ref;
      targs.w_cont = transfer->count("--w-cont") ? targs.w_cont : cfg.infer.w_cont;
      targs.seed = *tseed ? transfer_seed : cfg.seed;
      if (targs.out_dir.empty()) targs.out_dir = "out";
      return do_transfer(cfg, targs);
    }
    if (evaluate->parsed()) {
      if (max_per_scenario >= 0) cfg.eval.max_per_scenario = max_per_scenario;
      if (eargs.out_dir.empty()) eargs.out_dir = "out";
      return do_evaluate(cfg, eargs);
    }
    if (rerun->parsed()) {
      return do_rerun(log_path);
    }
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::fprintf(stderr, "error category=usage message=\"%s\"\n", e.what());
    return 1;
  } catch (const Error& e) {
    std::fprintf(stderr, "error category=%s message=\"%s\"\n",
                 category_token(e.category()), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error category=internal message=\"%s\"\n", e.what());
    return 1;
  }
  return 0;
}
