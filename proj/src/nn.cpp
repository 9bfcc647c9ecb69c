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

#include "ast/nn.h"

#include <cmath>

namespace ast {

void set_trainable(std::vector<NamedParam>& params, bool trainable) {
  for (auto& p : params) p.tensor->requires_grad = trainable;
}

void zero_grads(std::vector<NamedParam>& params) {
  for (auto& p : params) p.tensor->zero_grad();
}

uint64_t params_fingerprint(const std::vector<NamedParam>& params) {
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* bytes, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : params) {
    mix(p.name.data(), p.name.size());
    mix(p.tensor->data.data(), p.tensor->data.size() * sizeof(float));
  }
  return h;
}

Linear::Linear(int in, int out, Rng& rng, bool bias) {
  const float s = 1.f / std::sqrt(static_cast<float>(in));
  w = Tensor::uniform({in, out}, rng, -s, s, true);
  if (bias) b = Tensor::zeros({out}, true);
}

TensorPtr Linear::forward(const TensorPtr& x) const {
  auto y = matmul(x, w);
  return b ? add_rowvec(y, b) : y;
}

void Linear::params(const std::string& prefix,
                    std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".w", w});
  if (b) out.push_back({prefix + ".b", b});
}

Conv2d::Conv2d(int ci, int co, int k, int stride, int pad, Rng& rng)
    : stride(stride), pad(pad) {
  const float s = 1.f / std::sqrt(static_cast<float>(ci * k * k));
  w = Tensor::uniform({co, ci, k, k}, rng, -s, s, true);
  b = Tensor::zeros({co}, true);
}

TensorPtr Conv2d::forward(const TensorPtr& x) const {
  return conv2d(x, w, b, stride, stride, pad, pad);
}

void Conv2d::params(const std::string& prefix,
                    std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

ConvT2d::ConvT2d(int ci, int co, int k, int stride, int pad, Rng& rng)
    : stride(stride), pad(pad) {
  const float s = 1.f / std::sqrt(static_cast<float>(ci * k * k));
  w = Tensor::uniform({ci, co, k, k}, rng, -s, s, true);
  b = Tensor::zeros({co}, true);
}

TensorPtr ConvT2d::forward(const TensorPtr& x) const {
  return conv_transpose2d(x, w, b, stride, stride, pad, pad);
}

void ConvT2d::params(const std::string& prefix,
                     std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

LayerNorm::LayerNorm(int dim) {
  gamma = Tensor::full({dim}, 1.f, true);
  beta = Tensor::zeros({dim}, true);
}

TensorPtr LayerNorm::forward(const TensorPtr& x) const {
  return layer_norm_rows(x, gamma, beta);
}

void LayerNorm::params(const std::string& prefix,
                       std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

ChannelNorm::ChannelNorm(int channels) {
  gamma = Tensor::full({channels}, 1.f, true);
  beta = Tensor::zeros({channels}, true);
}

TensorPtr ChannelNorm::forward(const TensorPtr& x) const {
  return channel_norm(x, gamma, beta);
}

void ChannelNorm::params(const std::string& prefix,
                         std::vector<NamedParam>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

MultiHeadAttention::MultiHeadAttention(int dim, int kv_dim, int heads, Rng& rng)
    : heads(heads),
      wq(dim, dim, rng),
      wk(kv_dim, dim, rng),
      wv(kv_dim, dim, rng),
      wo(dim, dim, rng) {
  require(dim % heads == 0, ErrorCategory::kConfig,
          "attention width must be divisible by heads");
}

TensorPtr MultiHeadAttention::forward(const TensorPtr& q_src,
                                      const TensorPtr& kv_src,
                                      const TensorPtr& mask,
                                      TensorPtr* weights_out) const {
  auto q = wq.forward(q_src);
  auto k = wk.forward(kv_src);
  auto v = wv.forward(kv_src);
  auto attended = attention_heads(q, k, v, heads, mask, weights_out);
  return wo.forward(attended);
}

void MultiHeadAttention::params(const std::string& prefix,
                                std::vector<NamedParam>& out) const {
  wq.params(prefix + ".wq", out);
  wk.params(prefix + ".wk", out);
  wv.params(prefix + ".wv", out);
  wo.params(prefix + ".wo", out);
}

TransformerLayer::TransformerLayer(int dim, int heads, int ffn_dim, Rng& rng)
    : n1(dim),
      n2(dim),
      mha(dim, dim, heads, rng),
      f1(dim, ffn_dim, rng),
      f2(ffn_dim, dim, rng) {}

TensorPtr TransformerLayer::forward(const TensorPtr& x) const {
  auto normed = n1.forward(x);
  auto h = add(x, mha.forward(normed, normed));
  return add(h, f2.forward(gelu(f1.forward(n2.forward(h)))));
}

void TransformerLayer::params(const std::string& prefix,
                              std::vector<NamedParam>& out) const {
  n1.params(prefix + ".n1", out);
  n2.params(prefix + ".n2", out);
  mha.params(prefix + ".mha", out);
  f1.params(prefix + ".f1", out);
  f2.params(prefix + ".f2", out);
}

TensorPtr sinusoidal_embedding(const std::vector<float>& positions, int dim) {
  require(dim % 2 == 0, ErrorCategory::kConfig,
          "sinusoidal_embedding: dim must be even");
  const int n = static_cast<int>(positions.size());
  const int half = dim / 2;
  auto out = Tensor::zeros({n, dim});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < half; ++j) {
      const float freq =
          std::exp(-std::log(10000.f) * static_cast<float>(j) /
                   static_cast<float>(half));
      const float a = positions[static_cast<size_t>(i)] * freq;
      out->data[static_cast<size_t>(i) * dim + j] = std::sin(a);
      out->data[static_cast<size_t>(i) * dim + half + j] = std::cos(a);
    }
  }
  return out;
}

}  // namespace ast
