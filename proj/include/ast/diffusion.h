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
// Latent diffusion: noise schedule, conditional U-Net (scene embedding
// concatenated as time-broadcast channels, content sequence cross-attended at
// the bottleneck), training loss with condition dropout, dual classifier-free
// guidance, DDIM sampling, and the end-to-end transfer bundle.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ast/encoders.h"
#include "ast/tensor.h"

namespace ast {

// ----------------------------------------------------------------- schedule

struct NoiseSchedule {
  int t_train = 1000;
  std::vector<float> betas;       // index i corresponds to t = i+1
  std::vector<float> alphas;
  std::vector<float> alpha_bars;

  // alpha_bar(0) == 1 by convention.
  float alpha_bar(int t) const;
};

NoiseSchedule make_schedule(int t_train = 1000, float beta_min = 1e-4f,
                            float beta_max = 2e-2f);

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps, 1 <= t <= T.
TensorPtr q_sample(const TensorPtr& x0, int t, const TensorPtr& eps,
                   const NoiseSchedule& schedule);

// ----------------------------------------------------------------- guidance

struct GuidanceWeights {
  float w_ref = 1.f;
  float w_cont = 1.f;
};

enum class CfgMode { kComposable, kCascaded };

// Composable dual guidance from three predictions at the same (x_t, t):
// eps_uu (both null), eps_ru (scene only), eps_uc (content only).
// Evaluated as (w_ref*eps_ru + w_cont*eps_uc) + (1-w_ref-w_cont)*eps_uu so
// the reductions at w in {(0,0),(1,0),(1,1)} hold exactly in floats.
TensorPtr dual_cfg(const TensorPtr& eps_uu, const TensorPtr& eps_ru,
                   const TensorPtr& eps_uc, const GuidanceWeights& w);

// --------------------------------------------------------------------- unet

struct UNetConfig {
  int latent_ch = 8;
  int scene_dim = 64;
  std::vector<int> widths = {32, 64, 128};
  int time_dim = 128;
  int xattn_heads = 4;
  int content_width = 256;
};

class UNet {
 public:
  UNet(UNetConfig cfg, uint64_t seed);

  // x [N,C,F,Tq]; t one timestep per item; scene [N,scene_dim]; content one
  // sequence [T',content_width] per item. Returns the eps estimate, same
  // shape as x.
  TensorPtr forward(const TensorPtr& x, const std::vector<int>& t,
                    const TensorPtr& scene,
                    const std::vector<TensorPtr>& content) const;

  std::vector<NamedParam> parameters() const;
  const UNetConfig& config() const { return cfg_; }

 private:
  struct ResBlock {
    ChannelNorm n1, n2;
    Conv2d c1, c2;
    Linear time_proj;
    Conv2d skip;
    bool projects = false;
    ResBlock() = default;
    ResBlock(int cin, int cout, int time_dim, Rng& rng);
    TensorPtr forward(const TensorPtr& x, const TensorPtr& temb) const;
    void params(const std::string& prefix, std::vector<NamedParam>& out) const;
  };

  UNetConfig cfg_;
  Linear t1_, t2_;
  Conv2d stem_;
  ResBlock d00_, d01_, d10_, d11_, d20_, d21_;
  Conv2d down0_, down1_;
  ResBlock mid1_, mid2_;
  LayerNorm xnorm_;
  MultiHeadAttention xattn_;
  ResBlock u20_, u21_, u10_, u11_, u00_, u01_;
  Conv2d upconv1_, upconv0_;
  ChannelNorm out_norm_;
  Conv2d out_conv_;
};

// Learned stand-ins used when a condition is dropped or absent.
struct NullConditions {
  TensorPtr scene;    // [scene_dim]
  TensorPtr content;  // [1, content_width]

  static NullConditions init(const UNetConfig& cfg, uint64_t seed);
  std::vector<NamedParam> parameters() const;
};

// ----------------------------------------------------------------- training

struct LdmTrainItem {
  TensorPtr x0;                // [1,C,F,Tq] scaled latent, constant
  std::vector<float> scene;    // frozen scene embedding of the reference
  MelSpectrogram content_mel;  // content prompt features
};

struct CondDropConfig {
  float p_ref = 0.1f;
  float p_cont = 0.1f;
};

// One Bernoulli pair per item, in this order; exposed for rate tests.
std::pair<bool, bool> draw_condition_drop(Rng& rng, const CondDropConfig& cfg);

// eps-prediction MSE over a batch with independent condition dropout.
// Gradients reach the U-Net, the content encoder, and the null conditions.
TensorPtr ldm_training_loss(const UNet& unet, const NullConditions& nulls,
                            const ContentEncoder& content_encoder,
                            const std::vector<const LdmTrainItem*>& batch,
                            const NoiseSchedule& schedule,
                            const CondDropConfig& drop, Rng& rng);

// ----------------------------------------------------------------- sampling

using EpsFn = std::function<TensorPtr(const TensorPtr& x_t, int t)>;

// Deterministic DDIM (eta = 0); steps must divide schedule.t_train evenly.
TensorPtr ddim_sample(const EpsFn& eps_fn, const Shape& shape, int steps,
                      const NoiseSchedule& schedule, uint64_t seed);

// ------------------------------------------------------------------- bundle

struct BundleConfig {
  int t_train = 1000;
  float beta_min = 1e-4f;
  float beta_max = 2e-2f;
  int ddim_steps = 100;
  GuidanceWeights guidance;
  CfgMode cfg_mode = CfgMode::kComposable;
  float latent_scale = 1.f;
};

// Every component of the trained system, immutable at inference time.
struct LdmBundle {
  SceneEncoder scene_encoder;
  Vae vae;
  ContentEncoder content_encoder;
  UNet unet;
  NullConditions nulls;
  NoiseSchedule schedule;
  BundleConfig cfg;

  std::vector<float> embed_reference_audio(const Waveform& reference) const;
  std::vector<float> embed_reference_text(const std::string& caption) const;

  // Full transfer: content features + scene embedding -> DDIM -> decoded mel.
  MelSpectrogram transfer(const Waveform& content_wav,
                          const std::vector<float>& scene_embedding,
                          const GuidanceWeights& w, uint64_t seed) const;

  void save(const std::string& dir) const;
  static LdmBundle load(const std::string& dir);
};

}  // namespace ast
