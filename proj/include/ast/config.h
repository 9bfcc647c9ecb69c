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

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace ast {

// Every knob with a working default: the fully-defaulted config runs the
// whole pipeline on a laptop-class CPU.
struct RunConfig {
  uint64_t seed = 1234;
  float clip_seconds = 1.f;

  struct Dataset {
    int train_per_cell = 64;
    int eval_per_cell = 32;
    int eval_mismatched_per_cell = 0;  // diagnostic split, off by default
    int speakers = 8;
    int contents = 10;
  } dataset;

  struct VaeStage {
    int steps = 3000;
    int batch = 8;
    float lr = 1e-3f;
    float beta = 1e-2f;
    int base_ch = 32;
    int latent_ch = 8;
  } vae;

  struct SceneStage {
    int steps = 3000;
    int batch = 16;
    float lr = 1e-3f;
    float tau = 0.07f;
    int emb_dim = 64;
    int text_width = 64;
    int text_heads = 4;
    int text_layers = 2;
  } scene;

  struct ProbeStage {
    int steps = 2000;
    int batch = 16;
    float lr = 1e-3f;
  } probes;

  struct LdmStage {
    int steps = 8000;
    int batch = 4;
    float lr = 5e-4f;
    int t_train = 1000;
    float beta_min = 1e-4f;
    float beta_max = 2e-2f;
    float drop_ref = 0.1f;
    float drop_cont = 0.1f;
    std::vector<int> unet_widths = {32, 64, 128};
    int time_dim = 128;
    int xattn_heads = 4;
    int content_width = 256;
    int content_heads = 8;
    int filter_layers = 2;
    int embed_layers = 4;
    int ffn_mult = 2;
    std::string cfg_mode = "composable";  // or "cascaded"
  } ldm;

  struct Inference {
    int ddim_steps = 100;
    float w_ref = 1.f;
    float w_cont = 1.f;
    int griffin_lim_iters = 32;
  } infer;

  struct Eval {
    int max_per_scenario = 16;
  } eval;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load_file(const std::string& path);
};

}  // namespace ast
