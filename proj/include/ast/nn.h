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

#include "ast/tensor.h"

namespace ast {

struct NamedParam {
  std::string name;
  TensorPtr tensor;
};

void set_trainable(std::vector<NamedParam>& params, bool trainable);
void zero_grads(std::vector<NamedParam>& params);
// FNV-1a over raw parameter bytes; used by the freeze checks.
uint64_t params_fingerprint(const std::vector<NamedParam>& params);

struct Linear {
  TensorPtr w;  // [in, out]
  TensorPtr b;  // [out] or null
  Linear() = default;
  Linear(int in, int out, Rng& rng, bool bias = true);
  TensorPtr forward(const TensorPtr& x) const;  // [R,in] -> [R,out]
  void params(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct Conv2d {
  TensorPtr w;  // [Co,Ci,kh,kw]
  TensorPtr b;  // [Co]
  int stride = 1, pad = 0;
  Conv2d() = default;
  Conv2d(int ci, int co, int k, int stride, int pad, Rng& rng);
  TensorPtr forward(const TensorPtr& x) const;
  void params(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct ConvT2d {
  TensorPtr w;  // [Ci,Co,kh,kw]
  TensorPtr b;  // [Co]
  int stride = 1, pad = 0;
  ConvT2d() = default;
  ConvT2d(int ci, int co, int k, int stride, int pad, Rng& rng);
  TensorPtr forward(const TensorPtr& x) const;
  void params(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct LayerNorm {
  TensorPtr gamma, beta;
  LayerNorm() = default;
  explicit LayerNorm(int dim);
  TensorPtr forward(const TensorPtr& x) const;  // rows
  void params(const std::string& prefix, std::vector<NamedParam>& out) const;
};

struct ChannelNorm {
  TensorPtr gamma, beta;
  ChannelNorm() = default;
  explicit ChannelNorm(int channels);
  TensorPtr forward(const TensorPtr& x) const;  // NCHW
  void params(const std::string& prefix, std::vector<NamedParam>& out) const;
};

// Projections + per-head scaled dot attention + output projection.
struct MultiHeadAttention {
  int heads = 1;
  Linear wq, wk, wv, wo;
  MultiHeadAttention() = default;
  MultiHeadAttention(int dim, int kv_dim, int heads, Rng& rng);
  TensorPtr forward(const TensorPtr& q_src, const TensorPtr& kv_src,
                    const TensorPtr& mask = nullptr,
                    TensorPtr* weights_out = nullptr) const;
  void params(const std::string& prefix, std::vector<NamedParam>& out) const;
};

// Pre-norm transformer block: x + MHA(LN(x)), then x + FFN(LN(x)).
struct TransformerLayer {
  LayerNorm n1, n2;
  MultiHeadAttention mha;
  Linear f1, f2;
  TransformerLayer() = default;
  TransformerLayer(int dim, int heads, int ffn_dim, Rng& rng);
  TensorPtr forward(const TensorPtr& x) const;
  void params(const std::string& prefix, std::vector<NamedParam>& out) const;
};

// Sinusoidal position/timestep features, [n, dim], no gradient.
TensorPtr sinusoidal_embedding(const std::vector<float>& positions, int dim);

}  // namespace ast
