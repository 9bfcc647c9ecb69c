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

#include "ast/config.h"

#include <fstream>

#include "ast/error.h"

namespace ast {

using nlohmann::json;

namespace {
// Reads j[key] into v when present; leaves the default otherwise.
template <class T>
void maybe(const json& j, const char* key, T& v) {
  if (j.contains(key)) v = j.at(key).get<T>();
}
}  // namespace

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["clip_seconds"] = clip_seconds;
  j["dataset"] = {{"train_per_cell", dataset.train_per_cell},
                  {"eval_per_cell", dataset.eval_per_cell},
                  {"eval_mismatched_per_cell", dataset.eval_mismatched_per_cell},
                  {"speakers", dataset.speakers},
                  {"contents", dataset.contents}};
  j["vae"] = {{"steps", vae.steps},   {"batch", vae.batch},
              {"lr", vae.lr},         {"beta", vae.beta},
              {"base_ch", vae.base_ch}, {"latent_ch", vae.latent_ch}};
  j["scene"] = {{"steps", scene.steps},
                {"batch", scene.batch},
                {"lr", scene.lr},
                {"tau", scene.tau},
                {"emb_dim", scene.emb_dim},
                {"text_width", scene.text_width},
                {"text_heads", scene.text_heads},
                {"text_layers", scene.text_layers}};
  j["probes"] = {{"steps", probes.steps}, {"batch", probes.batch}, {"lr", probes.lr}};
  j["ldm"] = {{"steps", ldm.steps},
              {"batch", ldm.batch},
              {"lr", ldm.lr},
              {"t_train", ldm.t_train},
              {"beta_min", ldm.beta_min},
              {"beta_max", ldm.beta_max},
              {"drop_ref", ldm.drop_ref},
              {"drop_cont", ldm.drop_cont},
              {"unet_widths", ldm.unet_widths},
              {"time_dim", ldm.time_dim},
              {"xattn_heads", ldm.xattn_heads},
              {"content_width", ldm.content_width},
              {"content_heads", ldm.content_heads},
              {"filter_layers", ldm.filter_layers},
              {"embed_layers", ldm.embed_layers},
              {"ffn_mult", ldm.ffn_mult},
              {"cfg_mode", ldm.cfg_mode}};
  j["infer"] = {{"ddim_steps", infer.ddim_steps},
                {"w_ref", infer.w_ref},
                {"w_cont", infer.w_cont},
                {"griffin_lim_iters", infer.griffin_lim_iters}};
  j["eval"] = {{"max_per_scenario", eval.max_per_scenario}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  maybe(j, "seed", c.seed);
  maybe(j, "clip_seconds", c.clip_seconds);
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    maybe(d, "train_per_cell", c.dataset.train_per_cell);
    maybe(d, "eval_per_cell", c.dataset.eval_per_cell);
    maybe(d, "eval_mismatched_per_cell", c.dataset.eval_mismatched_per_cell);
    maybe(d, "speakers", c.dataset.speakers);
    maybe(d, "contents", c.dataset.contents);
  }
  if (j.contains("vae")) {
    const auto& d = j.at("vae");
    maybe(d, "steps", c.vae.steps);
    maybe(d, "batch", c.vae.batch);
    maybe(d, "lr", c.vae.lr);
    maybe(d, "beta", c.vae.beta);
    maybe(d, "base_ch", c.vae.base_ch);
    maybe(d, "latent_ch", c.vae.latent_ch);
  }
  if (j.contains("scene")) {
    const auto& d = j.at("scene");
    maybe(d, "steps", c.scene.steps);
    maybe(d, "batch", c.scene.batch);
    maybe(d, "lr", c.scene.lr);
    maybe(d, "tau", c.scene.tau);
    maybe(d, "emb_dim", c.scene.emb_dim);
    maybe(d, "text_width", c.scene.text_width);
    maybe(d, "text_heads", c.scene.text_heads);
    maybe(d, "text_layers", c.scene.text_layers);
  }
  if (j.contains("probes")) {
    const auto& d = j.at("probes");
    maybe(d, "steps", c.probes.steps);
    maybe(d, "batch", c.probes.batch);
    maybe(d, "lr", c.probes.lr);
  }
  if (j.contains("ldm")) {
    const auto& d = j.at("ldm");
    maybe(d, "steps", c.ldm.steps);
    maybe(d, "batch", c.ldm.batch);
    maybe(d, "lr", c.ldm.lr);
    maybe(d, "t_train", c.ldm.t_train);
    maybe(d, "beta_min", c.ldm.beta_min);
    maybe(d, "beta_max", c.ldm.beta_max);
    maybe(d, "drop_ref", c.ldm.drop_ref);
    maybe(d, "drop_cont", c.ldm.drop_cont);
    maybe(d, "unet_widths", c.ldm.unet_widths);
    maybe(d, "time_dim", c.ldm.time_dim);
    maybe(d, "xattn_heads", c.ldm.xattn_heads);
    maybe(d, "content_width", c.ldm.content_width);
    maybe(d, "content_heads", c.ldm.content_heads);
    maybe(d, "filter_layers", c.ldm.filter_layers);
    maybe(d, "embed_layers", c.ldm.embed_layers);
    maybe(d, "ffn_mult", c.ldm.ffn_mult);
    maybe(d, "cfg_mode", c.ldm.cfg_mode);
  }
  if (j.contains("infer")) {
    const auto& d = j.at("infer");
    maybe(d, "ddim_steps", c.infer.ddim_steps);
    maybe(d, "w_ref", c.infer.w_ref);
    maybe(d, "w_cont", c.infer.w_cont);
    maybe(d, "griffin_lim_iters", c.infer.griffin_lim_iters);
  }
  if (j.contains("eval")) {
    maybe(j.at("eval"), "max_per_scenario", c.eval.max_per_scenario);
  }
  return c;
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorCategory::kIo, "cannot open config " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    fail(ErrorCategory::kConfig, "bad config json in " + path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace ast
