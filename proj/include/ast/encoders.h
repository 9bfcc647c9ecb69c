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
// The conditioning stack: contrastive dual-branch scene encoder, spectrogram
// VAE, content encoder (filter + embedding modules), and classifier probes.

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "ast/adam.h"
#include "ast/dsp.h"
#include "ast/nn.h"
#include "ast/tensor.h"

namespace ast {

// Fixed affine normalization applied to log-mel values before any network.
struct MelNorm {
  float shift = -5.f;
  float scale = 3.f;
  float normalize(float logmel) const { return (logmel - shift) / scale; }
  float denormalize(float x) const { return x * scale + shift; }
};

// [N,1,64,T] tensor from log-mel batches, affine-normalized.
TensorPtr mel_batch_to_tensor(const std::vector<const MelSpectrogram*>& mels,
                              const MelNorm& norm);
TensorPtr mel_to_tensor(const MelSpectrogram& mel, const MelNorm& norm);

// Symmetric InfoNCE over row-aligned embedding batches: cross entropy against
// the diagonal of the similarity matrix / tau, averaged over both directions.
TensorPtr info_nce(const TensorPtr& audio_emb, const TensorPtr& text_emb,
                   float tau);

// ------------------------------------------------------------ SceneEncoder

struct SceneEncoderConfig {
  int emb_dim = 64;
  int text_width = 64;
  int text_heads = 4;
  int text_layers = 2;
  int ffn_mult = 2;
  int max_tokens = 16;
  float tau = 0.07f;  // contrastive temperature
  MelNorm mel_norm;
};

// Dual-branch audio/text embedding into one unit-norm space.
class SceneEncoder {
 public:
  SceneEncoder(SceneEncoderConfig cfg, std::vector<std::string> vocabulary,
               uint64_t seed);

  // [N, emb_dim], rows unit-norm.
  TensorPtr encode_audio_batch(const std::vector<const MelSpectrogram*>& mels) const;
  TensorPtr encode_text_batch(const std::vector<std::string>& captions) const;
  std::vector<float> encode_audio(const MelSpectrogram& mel) const;
  std::vector<float> encode_text(const std::string& caption) const;

  // Symmetric InfoNCE over cosine similarities / tau. Batch >= 2.
  TensorPtr contrastive_loss(const std::vector<const MelSpectrogram*>& mels,
                             const std::vector<std::string>& captions) const;

  std::vector<int> tokenize(const std::string& caption) const;

  std::vector<NamedParam> parameters() const;
  void save(const std::string& dir) const;
  static SceneEncoder load(const std::string& dir);
  const SceneEncoderConfig& config() const { return cfg_; }

 private:
  SceneEncoderConfig cfg_;
  std::vector<std::string> vocab_;
  // audio branch
  Conv2d a1_, a2_, a3_;
  Linear a_proj_;
  // text branch
  TensorPtr tok_table_;  // [V+1, width]; last row is UNK
  TensorPtr pos_table_;  // [max_tokens, width]
  std::vector<TransformerLayer> text_layers_;
  Linear t_proj_;
};

// -------------------------------------------------------------------- Vae

struct VaeConfig {
  int base_ch = 32;
  int latent_ch = 8;
  float beta = 1e-2f;
  MelNorm mel_norm;
};

struct VaeEncodeResult {
  TensorPtr mu;      // [N, C, 16, T/4]
  TensorPtr logvar;  // same shape
  TensorPtr z;       // mu in eval mode, sampled in train mode
};

class Vae {
 public:
  Vae(VaeConfig cfg, uint64_t seed);

  // x is a normalized [N,1,64,T] batch; T divisible by 4.
  VaeEncodeResult encode(const TensorPtr& x, Rng* sample_rng = nullptr) const;
  TensorPtr decode(const TensorPtr& z) const;  // -> [N,1,64,T] normalized
  // mse(recon, x) + beta * mean KL(posterior || N(0,I))
  TensorPtr loss(const TensorPtr& x, const TensorPtr& recon,
                 const TensorPtr& mu, const TensorPtr& logvar) const;

  MelSpectrogram tensor_to_mel(const TensorPtr& x, int item = 0) const;

  std::vector<NamedParam> parameters() const;
  void save(const std::string& dir,
            const nlohmann::json& extra_fields = nlohmann::json::object()) const;
  static Vae load(const std::string& dir);
  const VaeConfig& config() const { return cfg_; }

 private:
  VaeConfig cfg_;
  Conv2d e1_, e2_, e3_;
  Conv2d d1_, d4_;
  ConvT2d d2_, d3_;
};

// --------------------------------------------------------- ContentEncoder

struct ContentEncoderConfig {
  int width = 256;
  int heads = 8;
  int filter_layers = 2;
  int embed_layers = 4;
  int ffn_mult = 2;
  float mask_logit_clamp = 15.f;
  MelNorm mel_norm;
};

struct ContentConditioning {
  TensorPtr mask;           // [T, 64], strictly in (0,1)
  TensorPtr masked_logmel;  // [64, T], raw log scale
  TensorPtr sequence;       // [T/4, width]
};

// log(max(exp(logmel) * mask^T, floor)), computed in the log domain so a
// mask of exactly one reproduces the input bit for bit.
TensorPtr apply_ratio_mask(const TensorPtr& logmel, const TensorPtr& mask,
                           float power_floor = kMelPowerFloor);

class ContentEncoder {
 public:
  ContentEncoder(ContentEncoderConfig cfg, uint64_t seed);

  ContentConditioning forward(const MelSpectrogram& mel) const;

  std::vector<NamedParam> parameters() const;
  void save(const std::string& dir) const;
  static ContentEncoder load(const std::string& dir);
  const ContentEncoderConfig& config() const { return cfg_; }

 private:
  ContentEncoderConfig cfg_;
  // filter module
  Linear f_in_;
  std::vector<TransformerLayer> f_layers_;
  Linear f_out_;
  // embedding module: two stride-2 convs over time, then transformers
  TensorPtr c1_w_, c1_b_, c2_w_, c2_b_;
  std::vector<TransformerLayer> e_layers_;
};

// ------------------------------------------------------------------ Probe

struct ProbeConfig {
  int classes = 8;
  int emb_dim = 64;
  MelNorm mel_norm;
};

// Small conv classifier over log-mels; the penultimate activation serves as
// the similarity embedding.
class Probe {
 public:
  Probe(ProbeConfig cfg, uint64_t seed);

  TensorPtr logits_batch(const std::vector<const MelSpectrogram*>& mels) const;
  std::vector<float> embed(const MelSpectrogram& mel) const;  // penultimate
  int classify(const MelSpectrogram& mel) const;

  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  std::vector<NamedParam> parameters() const;
  void save(const std::string& dir) const;
  static Probe load(const std::string& dir);
  const ProbeConfig& config() const { return cfg_; }

 private:
  TensorPtr hidden_batch(const std::vector<const MelSpectrogram*>& mels) const;
  ProbeConfig cfg_;
  Conv2d c1_, c2_, c3_;
  Linear fc1_, fc2_;
  bool trained_ = false;
};

float cosine(const std::vector<float>& a, const std::vector<float>& b);

}  // namespace ast
