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

#include "ast/encoders.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "ast/checkpoint.h"

namespace ast {

using nlohmann::json;

TensorPtr mel_batch_to_tensor(const std::vector<const MelSpectrogram*>& mels,
                              const MelNorm& norm) {
  require(!mels.empty(), ErrorCategory::kUsage, "empty mel batch");
  const int n_mels = mels[0]->n_mels, frames = mels[0]->frames;
  const int n = static_cast<int>(mels.size());
  auto x = Tensor::zeros({n, 1, n_mels, frames});
  for (int i = 0; i < n; ++i) {
    require(mels[static_cast<size_t>(i)]->n_mels == n_mels &&
                mels[static_cast<size_t>(i)]->frames == frames,
            ErrorCategory::kDimension, "mel batch shapes disagree");
    float* dst = x->data.data() + static_cast<size_t>(i) * n_mels * frames;
    const auto& src = mels[static_cast<size_t>(i)]->values;
    for (size_t j = 0; j < src.size(); ++j) dst[j] = norm.normalize(src[j]);
  }
  return x;
}

TensorPtr mel_to_tensor(const MelSpectrogram& mel, const MelNorm& norm) {
  return mel_batch_to_tensor({&mel}, norm);
}

float cosine(const std::vector<float>& a, const std::vector<float>& b) {
  require(a.size() == b.size() && !a.empty(), ErrorCategory::kDimension,
          "cosine: size mismatch");
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  return static_cast<float>(dot / (std::sqrt(na * nb) + 1e-12));
}

namespace {

json mel_norm_to_json(const MelNorm& n) {
  return json{{"shift", n.shift}, {"scale", n.scale}};
}

MelNorm mel_norm_from_json(const json& j) {
  MelNorm n;
  n.shift = j.at("shift").get<float>();
  n.scale = j.at("scale").get<float>();
  return n;
}

std::vector<float> row_of(const TensorPtr& t, int row) {
  const int c = t->dim(1);
  return std::vector<float>(
      t->data.begin() + static_cast<size_t>(row) * c,
      t->data.begin() + static_cast<size_t>(row + 1) * c);
}

}  // namespace

// ------------------------------------------------------------ SceneEncoder

SceneEncoder::SceneEncoder(SceneEncoderConfig cfg,
                           std::vector<std::string> vocabulary, uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocabulary)) {
  require(!vocab_.empty(), ErrorCategory::kConfig,
          "scene encoder needs a vocabulary");
  Rng rng(mix_seed(seed, 0xA11CE));
  a1_ = Conv2d(1, 16, 3, 2, 1, rng);
  a2_ = Conv2d(16, 32, 3, 2, 1, rng);
  a3_ = Conv2d(32, 64, 3, 2, 1, rng);
  a_proj_ = Linear(64, cfg_.emb_dim, rng);
  const int v = static_cast<int>(vocab_.size());
  tok_table_ = Tensor::randn({v + 1, cfg_.text_width}, rng, 0.5f, true);
  pos_table_ = Tensor::randn({cfg_.max_tokens, cfg_.text_width}, rng, 0.1f, true);
  for (int i = 0; i < cfg_.text_layers; ++i)
    text_layers_.emplace_back(cfg_.text_width, cfg_.text_heads,
                              cfg_.ffn_mult * cfg_.text_width, rng);
  t_proj_ = Linear(cfg_.text_width, cfg_.emb_dim, rng);
}

TensorPtr SceneEncoder::encode_audio_batch(
    const std::vector<const MelSpectrogram*>& mels) const {
  auto x = mel_batch_to_tensor(mels, cfg_.mel_norm);
  x = gelu(a1_.forward(x));
  x = gelu(a2_.forward(x));
  x = gelu(a3_.forward(x));
  auto pooled = global_avg_pool(x);
  return l2_normalize_rows(a_proj_.forward(pooled));
}

std::vector<int> SceneEncoder::tokenize(const std::string& caption) const {
  std::vector<int> ids;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    int id = static_cast<int>(vocab_.size());  // UNK
    for (size_t i = 0; i < vocab_.size(); ++i)
      if (vocab_[i] == word) {
        id = static_cast<int>(i);
        break;
      }
    if (static_cast<int>(ids.size()) < cfg_.max_tokens) ids.push_back(id);
    word.clear();
  };
  for (char c : caption) {
    if (std::isalpha(static_cast<unsigned char>(c)))
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    else
      flush();
  }
  flush();
  require(!ids.empty(), ErrorCategory::kInput, "caption has no tokens");
  return ids;
}

TensorPtr SceneEncoder::encode_text_batch(
    const std::vector<std::string>& captions) const {
  require(!captions.empty(), ErrorCategory::kUsage, "empty caption batch");
  std::vector<TensorPtr> rows;
  for (const auto& cap : captions) {
    const auto ids = tokenize(cap);
    auto h = add(embedding_lookup(tok_table_, ids),
                 narrow(pos_table_, 0, 0, static_cast<int>(ids.size())));
    for (const auto& layer : text_layers_) h = layer.forward(h);
    rows.push_back(reshape(mean_axis0(h), {1, cfg_.text_width}));
  }
  auto pooled = rows.size() == 1 ? rows[0] : concat(rows, 0);
  return l2_normalize_rows(t_proj_.forward(pooled));
}

std::vector<float> SceneEncoder::encode_audio(const MelSpectrogram& mel) const {
  return row_of(encode_audio_batch({&mel}), 0);
}

std::vector<float> SceneEncoder::encode_text(const std::string& caption) const {
  return row_of(encode_text_batch({caption}), 0);
}

TensorPtr info_nce(const TensorPtr& audio_emb, const TensorPtr& text_emb,
                   float tau) {
  require(audio_emb->rank() == 2 && audio_emb->shape == text_emb->shape,
          ErrorCategory::kDimension, "info_nce: embedding batches must match");
  require(audio_emb->dim(0) >= 2, ErrorCategory::kUsage,
          "info_nce: batch needs at least 2 items");
  require(tau > 0.f, ErrorCategory::kConfig, "info_nce: temperature must be > 0");
  auto logits = scale(matmul(audio_emb, transpose(text_emb)), 1.f / tau);
  std::vector<int> labels(static_cast<size_t>(audio_emb->dim(0)));
  std::iota(labels.begin(), labels.end(), 0);
  auto loss_a = cross_entropy_logits(logits, labels);
  auto loss_t = cross_entropy_logits(transpose(logits), labels);
  return scale(add(loss_a, loss_t), 0.5f);
}

TensorPtr SceneEncoder::contrastive_loss(
    const std::vector<const MelSpectrogram*>& mels,
    const std::vector<std::string>& captions) const {
  require(mels.size() == captions.size(), ErrorCategory::kDimension,
          "contrastive batch mismatch");
  return info_nce(encode_audio_batch(mels), encode_text_batch(captions),
                  cfg_.tau);
}

std::vector<NamedParam> SceneEncoder::parameters() const {
  std::vector<NamedParam> out;
  a1_.params("audio.c1", out);
  a2_.params("audio.c2", out);
  a3_.params("audio.c3", out);
  a_proj_.params("audio.proj", out);
  out.push_back({"text.tokens", tok_table_});
  out.push_back({"text.positions", pos_table_});
  for (size_t i = 0; i < text_layers_.size(); ++i)
    text_layers_[i].params("text.layer" + std::to_string(i), out);
  t_proj_.params("text.proj", out);
  return out;
}

void SceneEncoder::save(const std::string& dir) const {
  json extra;
  extra["kind"] = "scene_encoder";
  extra["emb_dim"] = cfg_.emb_dim;
  extra["text_width"] = cfg_.text_width;
  extra["text_heads"] = cfg_.text_heads;
  extra["text_layers"] = cfg_.text_layers;
  extra["ffn_mult"] = cfg_.ffn_mult;
  extra["max_tokens"] = cfg_.max_tokens;
  extra["tau"] = cfg_.tau;
  extra["mel_norm"] = mel_norm_to_json(cfg_.mel_norm);
  extra["vocab"] = vocab_;
  save_checkpoint(dir, parameters(), extra);
}

SceneEncoder SceneEncoder::load(const std::string& dir) {
  json extra = load_checkpoint_extra(dir);
  require(extra.value("kind", "") == "scene_encoder", ErrorCategory::kInput,
          dir + " is not a scene encoder checkpoint");
  SceneEncoderConfig cfg;
  cfg.emb_dim = extra.at("emb_dim").get<int>();
  cfg.text_width = extra.at("text_width").get<int>();
  cfg.text_heads = extra.at("text_heads").get<int>();
  cfg.text_layers = extra.at("text_layers").get<int>();
  cfg.ffn_mult = extra.at("ffn_mult").get<int>();
  cfg.max_tokens = extra.at("max_tokens").get<int>();
  cfg.tau = extra.at("tau").get<float>();
  cfg.mel_norm = mel_norm_from_json(extra.at("mel_norm"));
  SceneEncoder enc(cfg, extra.at("vocab").get<std::vector<std::string>>(), 0);
  load_checkpoint(dir, enc.parameters());
  return enc;
}

// -------------------------------------------------------------------- Vae

Vae::Vae(VaeConfig cfg, uint64_t seed) : cfg_(cfg) {
  Rng rng(mix_seed(seed, 0x7AE));
  const int b = cfg_.base_ch;
  e1_ = Conv2d(1, b, 3, 2, 1, rng);
  e2_ = Conv2d(b, 2 * b, 3, 2, 1, rng);
  e3_ = Conv2d(2 * b, 2 * cfg_.latent_ch, 3, 1, 1, rng);
  d1_ = Conv2d(cfg_.latent_ch, 2 * b, 3, 1, 1, rng);
  d2_ = ConvT2d(2 * b, b, 4, 2, 1, rng);
  d3_ = ConvT2d(b, b / 2, 4, 2, 1, rng);
  d4_ = Conv2d(b / 2, 1, 3, 1, 1, rng);
}

VaeEncodeResult Vae::encode(const TensorPtr& x, Rng* sample_rng) const {
  require(x->rank() == 4 && x->dim(1) == 1, ErrorCategory::kDimension,
          "vae: input must be [N,1,F,T]");
  require(x->dim(3) % 4 == 0, ErrorCategory::kDimension,
          "vae: T must be divisible by 4");
  auto h = gelu(e1_.forward(x));
  h = gelu(e2_.forward(h));
  auto stats = e3_.forward(h);
  VaeEncodeResult r;
  r.mu = narrow(stats, 1, 0, cfg_.latent_ch);
  r.logvar = clamp(narrow(stats, 1, cfg_.latent_ch, cfg_.latent_ch), -10.f, 10.f);
  if (sample_rng) {
    auto eps = Tensor::randn(r.mu->shape, *sample_rng);
    r.z = add(r.mu, mul(exp(scale(r.logvar, 0.5f)), eps));
  } else {
    r.z = r.mu;
  }
  return r;
}

TensorPtr Vae::decode(const TensorPtr& z) const {
  require(z->rank() == 4 && z->dim(1) == cfg_.latent_ch,
          ErrorCategory::kDimension, "vae: bad latent shape");
  auto h = gelu(d1_.forward(z));
  h = gelu(d2_.forward(h));
  h = gelu(d3_.forward(h));
  return d4_.forward(h);
}

TensorPtr Vae::loss(const TensorPtr& x, const TensorPtr& recon,
                    const TensorPtr& mu, const TensorPtr& logvar) const {
  auto rec = mse_loss(recon, x);
  // KL(N(mu, e^lv) || N(0,1)) = 0.5 (mu^2 + e^lv - 1 - lv), averaged
  auto t = sub(add(mul(mu, mu), exp(logvar)), add_scalar(logvar, 1.f));
  return add(rec, scale(mean(t), 0.5f * cfg_.beta));
}

MelSpectrogram Vae::tensor_to_mel(const TensorPtr& x, int item) const {
  require(x->rank() == 4 && x->dim(1) == 1, ErrorCategory::kDimension,
          "tensor_to_mel: need [N,1,F,T]");
  MelSpectrogram mel;
  mel.n_mels = x->dim(2);
  mel.frames = x->dim(3);
  mel.values.resize(static_cast<size_t>(mel.n_mels) * mel.frames);
  const float* src =
      x->data.data() + static_cast<size_t>(item) * mel.n_mels * mel.frames;
  const float floor_log = std::log(mel.power_floor);
  for (size_t i = 0; i < mel.values.size(); ++i)
    mel.values[i] = std::max(cfg_.mel_norm.denormalize(src[i]), floor_log);
  return mel;
}

std::vector<NamedParam> Vae::parameters() const {
  std::vector<NamedParam> out;
  e1_.params("enc.c1", out);
  e2_.params("enc.c2", out);
  e3_.params("enc.c3", out);
  d1_.params("dec.c1", out);
  d2_.params("dec.t2", out);
  d3_.params("dec.t3", out);
  d4_.params("dec.c4", out);
  return out;
}

void Vae::save(const std::string& dir, const json& extra_fields) const {
  json extra = extra_fields;
  extra["kind"] = "vae";
  extra["base_ch"] = cfg_.base_ch;
  extra["latent_ch"] = cfg_.latent_ch;
  extra["beta"] = cfg_.beta;
  extra["mel_norm"] = mel_norm_to_json(cfg_.mel_norm);
  save_checkpoint(dir, parameters(), extra);
}

Vae Vae::load(const std::string& dir) {
  json extra = load_checkpoint_extra(dir);
  require(extra.value("kind", "") == "vae", ErrorCategory::kInput,
          dir + " is not a vae checkpoint");
  VaeConfig cfg;
  cfg.base_ch = extra.at("base_ch").get<int>();
  cfg.latent_ch = extra.at("latent_ch").get<int>();
  cfg.beta = extra.at("beta").get<float>();
  cfg.mel_norm = mel_norm_from_json(extra.at("mel_norm"));
  Vae vae(cfg, 0);
  load_checkpoint(dir, vae.parameters());
  return vae;
}

// --------------------------------------------------------- ContentEncoder

TensorPtr apply_ratio_mask(const TensorPtr& logmel, const TensorPtr& mask,
                           float power_floor) {
  require(logmel->rank() == 2 && mask->rank() == 2 &&
              logmel->dim(0) == mask->dim(1) && logmel->dim(1) == mask->dim(0),
          ErrorCategory::kDimension,
          "apply_ratio_mask: need logmel [M,T] and mask [T,M]");
  auto log_mask = log(clamp_min(mask, 1e-20f));
  return clamp_min(add(logmel, transpose(log_mask)), std::log(power_floor));
}

ContentEncoder::ContentEncoder(ContentEncoderConfig cfg, uint64_t seed)
    : cfg_(cfg) {
  Rng rng(mix_seed(seed, 0xC047E47));
  const int w = cfg_.width;
  f_in_ = Linear(64, w, rng);
  for (int i = 0; i < cfg_.filter_layers; ++i)
    f_layers_.emplace_back(w, cfg_.heads, cfg_.ffn_mult * w, rng);
  f_out_ = Linear(w, 64, rng);
  const float s1 = 1.f / std::sqrt(64.f * 3.f);
  c1_w_ = Tensor::uniform({w, 64, 1, 3}, rng, -s1, s1, true);
  c1_b_ = Tensor::zeros({w}, true);
  const float s2 = 1.f / std::sqrt(static_cast<float>(w) * 3.f);
  c2_w_ = Tensor::uniform({w, w, 1, 3}, rng, -s2, s2, true);
  c2_b_ = Tensor::zeros({w}, true);
  for (int i = 0; i < cfg_.embed_layers; ++i)
    e_layers_.emplace_back(w, cfg_.heads, cfg_.ffn_mult * w, rng);
}

ContentConditioning ContentEncoder::forward(const MelSpectrogram& mel) const {
  const int t = mel.frames, m = mel.n_mels;
  require(t % 4 == 0, ErrorCategory::kDimension,
          "content encoder: T must be divisible by 4");

  // filter module over per-frame features
  auto tokens = Tensor::zeros({t, m});
  for (int i = 0; i < t; ++i)
    for (int b = 0; b < m; ++b)
      tokens->data[static_cast<size_t>(i) * m + b] =
          cfg_.mel_norm.normalize(mel.at(b, i));
  auto h = f_in_.forward(tokens);
  for (const auto& layer : f_layers_) h = layer.forward(h);
  auto logits = clamp(f_out_.forward(h), -cfg_.mask_logit_clamp,
                      cfg_.mask_logit_clamp);

  ContentConditioning out;
  out.mask = sigmoid(logits);  // [T, 64], strictly inside (0,1)

  auto raw = Tensor::from({m, t}, mel.values);
  out.masked_logmel = apply_ratio_mask(raw, out.mask, mel.power_floor);

  // embedding module: normalize, two stride-2 convs over time, transformers
  auto norm = scale(add_scalar(out.masked_logmel, -cfg_.mel_norm.shift),
                    1.f / cfg_.mel_norm.scale);
  auto x = reshape(norm, {1, m, 1, t});
  x = gelu(conv2d(x, c1_w_, c1_b_, 1, 2, 0, 1));
  x = gelu(conv2d(x, c2_w_, c2_b_, 1, 2, 0, 1));
  const int tq = t / 4;
  auto seq = transpose(reshape(x, {cfg_.width, tq}));
  std::vector<float> positions(static_cast<size_t>(tq));
  std::iota(positions.begin(), positions.end(), 0.f);
  seq = add(seq, sinusoidal_embedding(positions, cfg_.width));
  for (const auto& layer : e_layers_) seq = layer.forward(seq);
  out.sequence = seq;
  return out;
}

std::vector<NamedParam> ContentEncoder::parameters() const {
  std::vector<NamedParam> out;
  f_in_.params("filter.in", out);
  for (size_t i = 0; i < f_layers_.size(); ++i)
    f_layers_[i].params("filter.layer" + std::to_string(i), out);
  f_out_.params("filter.out", out);
  out.push_back({"embed.c1.w", c1_w_});
  out.push_back({"embed.c1.b", c1_b_});
  out.push_back({"embed.c2.w", c2_w_});
  out.push_back({"embed.c2.b", c2_b_});
  for (size_t i = 0; i < e_layers_.size(); ++i)
    e_layers_[i].params("embed.layer" + std::to_string(i), out);
  return out;
}

void ContentEncoder::save(const std::string& dir) const {
  json extra;
  extra["kind"] = "content_encoder";
  extra["width"] = cfg_.width;
  extra["heads"] = cfg_.heads;
  extra["filter_layers"] = cfg_.filter_layers;
  extra["embed_layers"] = cfg_.embed_layers;
  extra["ffn_mult"] = cfg_.ffn_mult;
  extra["mask_logit_clamp"] = cfg_.mask_logit_clamp;
  extra["mel_norm"] = mel_norm_to_json(cfg_.mel_norm);
  save_checkpoint(dir, parameters(), extra);
}

ContentEncoder ContentEncoder::load(const std::string& dir) {
  json extra = load_checkpoint_extra(dir);
  require(extra.value("kind", "") == "content_encoder", ErrorCategory::kInput,
          dir + " is not a content encoder checkpoint");
  ContentEncoderConfig cfg;
  cfg.width = extra.at("width").get<int>();
  cfg.heads = extra.at("heads").get<int>();
  cfg.filter_layers = extra.at("filter_layers").get<int>();
  cfg.embed_layers = extra.at("embed_layers").get<int>();
  cfg.ffn_mult = extra.at("ffn_mult").get<int>();
  cfg.mask_logit_clamp = extra.at("mask_logit_clamp").get<float>();
  cfg.mel_norm = mel_norm_from_json(extra.at("mel_norm"));
  ContentEncoder enc(cfg, 0);
  load_checkpoint(dir, enc.parameters());
  return enc;
}

// ------------------------------------------------------------------ Probe

Probe::Probe(ProbeConfig cfg, uint64_t seed) : cfg_(cfg) {
  Rng rng(mix_seed(seed, 0x9806E));
  c1_ = Conv2d(1, 16, 3, 2, 1, rng);
  c2_ = Conv2d(16, 32, 3, 2, 1, rng);
  c3_ = Conv2d(32, 64, 3, 2, 1, rng);
  fc1_ = Linear(64, cfg_.emb_dim, rng);
  fc2_ = Linear(cfg_.emb_dim, cfg_.classes, rng);
}

TensorPtr Probe::hidden_batch(const std::vector<const MelSpectrogram*>& mels) const {
  auto x = mel_batch_to_tensor(mels, cfg_.mel_norm);
  x = gelu(c1_.forward(x));
  x = gelu(c2_.forward(x));
  x = gelu(c3_.forward(x));
  return gelu(fc1_.forward(global_avg_pool(x)));
}

TensorPtr Probe::logits_batch(const std::vector<const MelSpectrogram*>& mels) const {
  return fc2_.forward(hidden_batch(mels));
}

std::vector<float> Probe::embed(const MelSpectrogram& mel) const {
  require(trained_, ErrorCategory::kUsage, "probe not trained yet");
  return row_of(hidden_batch({&mel}), 0);
}

int Probe::classify(const MelSpectrogram& mel) const {
  require(trained_, ErrorCategory::kUsage, "probe not trained yet");
  auto l = logits_batch({&mel});
  int best = 0;
  for (int k = 1; k < cfg_.classes; ++k)
    if (l->data[static_cast<size_t>(k)] > l->data[static_cast<size_t>(best)]) best = k;
  return best;
}

std::vector<NamedParam> Probe::parameters() const {
  std::vector<NamedParam> out;
  c1_.params("c1", out);
  c2_.params("c2", out);
  c3_.params("c3", out);
  fc1_.params("fc1", out);
  fc2_.params("fc2", out);
  return out;
}

void Probe::save(const std::string& dir) const {
  json extra;
  extra["kind"] = "probe";
  extra["classes"] = cfg_.classes;
  extra["emb_dim"] = cfg_.emb_dim;
  extra["trained"] = trained_;
  extra["mel_norm"] = mel_norm_to_json(cfg_.mel_norm);
  save_checkpoint(dir, parameters(), extra);
}

Probe Probe::load(const std::string& dir) {
  json extra = load_checkpoint_extra(dir);
  require(extra.value("kind", "") == "probe", ErrorCategory::kInput,
          dir + " is not a probe checkpoint");
  ProbeConfig cfg;
  cfg.classes = extra.at("classes").get<int>();
  cfg.emb_dim = extra.at("emb_dim").get<int>();
  cfg.mel_norm = mel_norm_from_json(extra.at("mel_norm"));
  Probe p(cfg, 0);
  load_checkpoint(dir, p.parameters());
  p.trained_ = extra.value("trained", false);
  return p;
}

}  // namespace ast
