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
// Staged orchestration used by both the CLI and the acceptance suite:
// simulate -> train vae -> train scene -> train probes -> train ldm ->
// transfer / evaluate. Every run is a pure function of (config, args).

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ast/config.h"
#include "ast/diffusion.h"
#include "ast/eval.h"
#include "ast/scene_sim.h"

namespace ast {

struct TrainLogEntry {
  int step = 0;
  float loss = 0.f;
};

// Checkpoint layout under one root directory.
struct CkptPaths {
  std::string root;
  std::string vae() const { return root + "/vae"; }
  std::string scene() const { return root + "/scene"; }
  std::string content_probe() const { return root + "/probes/content"; }
  std::string speaker_probe() const { return root + "/probes/speaker"; }
  std::string bundle() const { return root + "/bundle"; }
};

DatasetSummary run_simulate(const RunConfig& cfg, const std::string& out_dir);

std::vector<TrainLogEntry> train_vae(const RunConfig& cfg,
                                     const std::string& data_dir,
                                     const CkptPaths& ckpt);
std::vector<TrainLogEntry> train_scene(const RunConfig& cfg,
                                       const std::string& data_dir,
                                       const CkptPaths& ckpt);
std::vector<TrainLogEntry> train_probes(const RunConfig& cfg,
                                        const std::string& data_dir,
                                        const CkptPaths& ckpt);
// Requires the vae and scene checkpoints; writes the full bundle.
std::vector<TrainLogEntry> train_ldm(const RunConfig& cfg,
                                     const std::string& data_dir,
                                     const CkptPaths& ckpt);

// ---- post-training measurements (shared with the acceptance suite) ----

float measure_vae_heldout_mae(const Vae& vae,
                              const std::vector<ManifestRow>& eval_rows,
                              int max_items = 64);
struct RetrievalResult {
  float text_to_audio = 0.f;
  float audio_to_text = 0.f;
};
// Retrieval@1 over one held-out batch of rows with pairwise-distinct captions.
RetrievalResult measure_retrieval_at1(const SceneEncoder& enc,
                                      const std::vector<ManifestRow>& eval_rows,
                                      int batch, uint64_t seed);
struct ProbeAccuracy {
  float speaker = 0.f;
  float content = 0.f;
};
ProbeAccuracy measure_probe_accuracy(const Probe& speaker_probe,
                                     const Probe& content_probe,
                                     const std::vector<ManifestRow>& eval_rows,
                                     float clip_seconds, int max_items = 128);

// ---- inference ----

struct TransferArgs {
  std::string bundle_dir;
  std::string content_wav;
  std::optional<std::string> ref_audio;
  std::optional<std::string> ref_text;
  float w_ref = 1.f;
  float w_cont = 1.f;
  uint64_t seed = 0;
  std::string out_dir;
};

struct TransferResult {
  std::string wav_path;
  std::string mel_path;
};

TransferResult run_transfer(const RunConfig& cfg, const TransferArgs& args);

struct EvaluateArgs {
  std::string bundle_dir;
  std::string probes_root;  // checkpoint root holding probes/
  std::string manifest_path;
  std::string out_dir;
  bool ground_truth_as_generated = false;
};

std::vector<MetricReport> run_evaluate(const RunConfig& cfg,
                                       const EvaluateArgs& args);

// Binary mel file: "ASTMEL1\n", int32 n_mels, int32 frames, f32 LE values.
void write_mel_bin(const std::string& path, const MelSpectrogram& mel);
MelSpectrogram read_mel_bin(const std::string& path);

// Run log: the fully resolved config plus the command and its arguments;
// `rerun` replays it and must reproduce all artifacts bitwise.
void write_run_log(const std::string& out_dir, const std::string& command,
                   const nlohmann::json& args, const RunConfig& cfg);

}  // namespace ast
