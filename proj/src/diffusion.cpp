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

#include "ast/diffusion.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ast/checkpoint.h"

namespace ast {

namespace fs = std::filesystem;
using nlohmann::json;

// ----------------------------------------------------------------- schedule

float NoiseSchedule::alpha_bar(int t) const {
  require(t >= 0 && t <= t_train, ErrorCategory::kUsage,
          "alpha_bar: t out of range");
  return t == 0 ? 1.f : alpha_bars[static_cast<size_t>(t) - 1];
}

NoiseSchedule make_schedule(int t_train, float beta_min, float beta_max) {
  require(t_train >= 1, ErrorCategory::kConfig, "schedule: t_train < 1");
  require(0.f < beta_min && beta_min < beta_max && beta_max < 1.f,
          ErrorCategory::kConfig, "schedule: need 0 < beta_min < beta_max < 1");
  NoiseSchedule s;
  s.t_train = t_train;
  s.betas.resize(static_cast<size_t>(t_train));
  s.alphas.resize(static_cast<size_t>(t_train));
  s.alpha_bars.resize(static_cast<size_t>(t_train));
  float prod = 1.f;
  for (int i = 0; i < t_train; ++i) {
    const float beta =
        t_train == 1
            ? beta_min
            : beta_min + (beta_max - beta_min) * static_cast<float>(i) /
                             static_cast<float>(t_train - 1);
    s.betas[static_cast<size_t>(i)] = beta;
    s.alphas[static_cast<size_t>(i)] = 1.f - beta;
    prod *= 1.f - beta;
    s.alpha_bars[static_cast<size_t>(i)] = prod;
  }
  return s;
}

TensorPtr q_sample(const TensorPtr& x0, int t, const TensorPtr& eps,
                   const NoiseSchedule& schedule) {
  require(t >= 1 && t <= schedule.t_train, ErrorCategory::kUsage,
          "q_sample: t out of range");
  require(x0->shape == eps->shape, ErrorCategory::kDimension,
          "q_sample: x0/eps shape mismatch");
  const float ab = schedule.alpha_bar(t);
  return add(scale(x0, std::sqrt(ab)), scale(eps, std::sqrt(1.f - ab)));
}

// ----------------------------------------------------------------- guidance

TensorPtr dual_cfg(const TensorPtr& eps_uu, const TensorPtr& eps_ru,
                   const TensorPtr& eps_uc, const GuidanceWeights& w) {
  require(eps_uu->shape == eps_ru->shape && eps_uu->shape == eps_uc->shape,
          ErrorCategory::kDimension, "dual_cfg: shape mismatch");
  auto out = Tensor::zeros(eps_uu->shape);
  const float wu = 1.f - w.w_ref - w.w_cont;
  for (size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = (w.w_ref * eps_ru->data[i] + w.w_cont * eps_uc->data[i]) +
                   wu * eps_uu->data[i];
  return out;
}

// --------------------------------------------------------------------- unet

UNet::ResBlock::ResBlock(int cin, int cout, int time_dim, Rng& rng)
    : n1(cin),
      n2(cout),
      c1(cin, cout, 3, 1, 1, rng),
      c2(cout, cout, 3, 1, 1, rng),
      time_proj(time_dim, cout, rng),
      projects(cin != cout) {
  if (projects) skip = Conv2d(cin, cout, 1, 1, 0, rng);
}

TensorPtr UNet::ResBlock::forward(const TensorPtr& x,
                                  const TensorPtr& temb) const {
  auto h = c1.forward(gelu(n1.forward(x)));
  h = add_channel_bias(h, time_proj.forward(temb));
  h = c2.forward(gelu(n2.forward(h)));
  return add(h, projects ? skip.forward(x) : x);
}

void UNet::ResBlock::params(const std::string& prefix,
                            std::vector<NamedParam>& out) const {
  n1.params(prefix + ".n1", out);
  n2.params(prefix + ".n2", out);
  c1.params(prefix + ".c1", out);
  c2.params(prefix + ".c2", out);
  time_proj.params(prefix + ".temb", out);
  if (projects) skip.params(prefix + ".skip", out);
}

UNet::UNet(UNetConfig cfg, uint64_t seed) : cfg_(cfg) {
  require(cfg_.widths.size() == 3, ErrorCategory::kConfig,
          "unet: expects three resolution widths");
  Rng rng(mix_seed(seed, 0x11E7));
  const int w0 = cfg_.widths[0], w1 = cfg_.widths[1], w2 = cfg_.widths[2];
  const int td = cfg_.time_dim;
  t1_ = Linear(td, td, rng);
  t2_ = Linear(td, td, rng);
  stem_ = Conv2d(cfg_.latent_ch + cfg_.scene_dim, w0, 3, 1, 1, rng);
  d00_ = ResBlock(w0, w0, td, rng);
  d01_ = ResBlock(w0, w0, td, rng);
  down0_ = Conv2d(w0, w1, 3, 2, 1, rng);
  d10_ = ResBlock(w1, w1, td, rng);
  d11_ = ResBlock(w1, w1, td, rng);
  down1_ = Conv2d(w1, w2, 3, 2, 1, rng);
  d20_ = ResBlock(w2, w2, td, rng);
  d21_ = ResBlock(w2, w2, td, rng);
  mid1_ = ResBlock(w2, w2, td, rng);
  xnorm_ = LayerNorm(w2);
  xattn_ = MultiHeadAttention(w2, cfg_.content_width, cfg_.xattn_heads, rng);
  mid2_ = ResBlock(w2, w2, td, rng);
  u20_ = ResBlock(2 * w2, w2, td, rng);
  u21_ = ResBlock(w2, w2, td, rng);
  upconv1_ = Conv2d(w2, w1, 3, 1, 1, rng);
  u10_ = ResBlock(2 * w1, w1, td, rng);
  u11_ = ResBlock(w1, w1, td, rng);
  upconv0_ = Conv2d(w1, w0, 3, 1, 1, rng);
  u00_ = ResBlock(2 * w0, w0, td, rng);
  u01_ = ResBlock(w0, w0, td, rng);
  out_norm_ = ChannelNorm(w0);
  out_conv_ = Conv2d(w0, cfg_.latent_ch, 3, 1, 1, rng);
}

namespace {

// Crop trailing rows/cols so x matches [*, *, h, w].
TensorPtr crop_to(const TensorPtr& x, int h, int w) {
  TensorPtr out = x;
  if (out->dim(2) != h) out = narrow(out, 2, 0, h);
  if (out->dim(3) != w) out = narrow(out, 3, 0, w);
  return out;
}

}  // namespace

TensorPtr UNet::forward(const TensorPtr& x, const std::vector<int>& t,
                        const TensorPtr& scene,
                        const std::vector<TensorPtr>& content) const {
  require(x->rank() == 4 && x->dim(1) == cfg_.latent_ch,
          ErrorCategory::kDimension, "unet: bad latent shape");
  const int n = x->dim(0);
  require(static_cast<int>(t.size()) == n, ErrorCategory::kDimension,
          "unet: one timestep per item");
  require(scene->rank() == 2 && scene->dim(0) == n &&
              scene->dim(1) == cfg_.scene_dim,
          ErrorCategory::kDimension, "unet: scene must be [N,scene_dim]");
  require(static_cast<int>(content.size()) == n, ErrorCategory::kDimension,
          "unet: one content sequence per item");
  for (const auto& c : content)
    require(c->rank() == 2 && c->dim(1) == cfg_.content_width,
            ErrorCategory::kDimension, "unet: bad content sequence width");

  // timestep embedding
  std::vector<float> tf(t.begin(), t.end());
  auto temb = t2_.forward(gelu(t1_.forward(
      sinusoidal_embedding(tf, cfg_.time_dim))));

  // scene embedding as channels, repeated over frequency and time
  auto cond = broadcast_to_chw(scene, x->dim(2), x->dim(3));
  auto h = stem_.forward(concat({x, cond}, 1));

  h = d00_.forward(h, temb);
  auto skip0 = d01_.forward(h, temb);
  h = down0_.forward(skip0);
  h = d10_.forward(h, temb);
  auto skip1 = d11_.forward(h, temb);
  h = down1_.forward(skip1);
  h = d20_.forward(h, temb);
  auto skip2 = d21_.forward(h, temb);

  h = mid1_.forward(skip2, temb);

  // bottleneck cross-attention onto the content sequence, per item
  {
    const int c = h->dim(1), hh = h->dim(2), ww = h->dim(3);
    const int tokens = hh * ww;
    std::vector<float> pos(static_cast<size_t>(tokens));
    std::iota(pos.begin(), pos.end(), 0.f);
    auto posemb = sinusoidal_embedding(pos, c);
    std::vector<TensorPtr> items;
    items.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      auto xi = reshape(narrow(h, 0, i, 1), {c, tokens});
      auto q = add(transpose(xi), posemb);  // [tokens, c]
      auto attended =
          xattn_.forward(xnorm_.forward(q), content[static_cast<size_t>(i)]);
      auto merged = add(transpose(xi), attended);
      items.push_back(reshape(transpose(merged), {1, c, hh, ww}));
    }
    h = items.size() == 1 ? items[0] : concat(items, 0);
  }

  h = mid2_.forward(h, temb);

  h = u20_.forward(concat({h, skip2}, 1), temb);
  h = u21_.forward(h, temb);
  h = upconv1_.forward(crop_to(upsample_nearest2x(h), skip1->dim(2), skip1->dim(3)));
  h = u10_.forward(concat({h, skip1}, 1), temb);
  h = u11_.forward(h, temb);
  h = upconv0_.forward(crop_to(upsample_nearest2x(h), skip0->dim(2), skip0->dim(3)));
  h = u00_.forward(concat({h, skip0}, 1), temb);
  h = u01_.forward(h, temb);
  return out_conv_.forward(gelu(out_norm_.forward(h)));
}

std::vector<NamedParam> UNet::parameters() const {
  std::vector<NamedParam> out;
  t1_.params("time.l1", out);
  t2_.params("time.l2", out);
  stem_.params("stem", out);
  d00_.params("down0.b0", out);
  d01_.params("down0.b1", out);
  down0_.params("down0.pool", out);
  d10_.params("down1.b0", out);
  d11_.params("down1.b1", out);
  down1_.params("down1.pool", out);
  d20_.params("down2.b0", out);
  d21_.params("down2.b1", out);
  mid1_.params("mid.b0", out);
  xnorm_.params("mid.xnorm", out);
  xattn_.params("mid.xattn", out);
  mid2_.params("mid.b1", out);
  u20_.params("up2.b0", out);
  u21_.params("up2.b1", out);
  upconv1_.params("up1.conv", out);
  u10_.params("up1.b0", out);
  u11_.params("up1.b1", out);
  upconv0_.params("up0.conv", out);
  u00_.params("up0.b0", out);
  u01_.params("up0.b1", out);
  out_norm_.params("out.norm", out);
  out_conv_.params("out.conv", out);
  return out;
}

NullConditions NullConditions::init(const UNetConfig& cfg, uint64_t seed) {
  Rng rng(mix_seed(seed, 0x0));
  NullConditions n;
  n.scene = Tensor::randn({cfg.scene_dim}, rng, 0.02f, true);
  n.content = Tensor::randn({1, cfg.content_width}, rng, 0.02f, true);
  return n;
}

std::vector<NamedParam> NullConditions::parameters() const {
  return {{"null.scene", scene}, {"null.content", content}};
}

// ----------------------------------------------------------------- training

std::pair<bool, bool> draw_condition_drop(Rng& rng, const CondDropConfig& cfg) {
  const bool drop_ref = rng.bernoulli(cfg.p_ref);
  const bool drop_cont = rng.bernoulli(cfg.p_cont);
  return {drop_ref, drop_cont};
}

TensorPtr ldm_training_loss(const UNet& unet, const NullConditions& nulls,
                            const ContentEncoder& content_encoder,
                            const std::vector<const LdmTrainItem*>& batch,
                            const NoiseSchedule& schedule,
                            const CondDropConfig& drop, Rng& rng) {
  require(!batch.empty(), ErrorCategory::kUsage, "ldm_training_loss: empty batch");
  const int n = static_cast<int>(batch.size());
  const int scene_dim = unet.config().scene_dim;

  std::vector<TensorPtr> xts, epss, scene_rows, contents;
  std::vector<int> ts;
  for (int i = 0; i < n; ++i) {
    const auto& item = *batch[static_cast<size_t>(i)];
    const int t = 1 + static_cast<int>(rng.randint(schedule.t_train));
    auto eps = Tensor::randn(item.x0->shape, rng);
    xts.push_back(q_sample(item.x0, t, eps, schedule));
    epss.push_back(eps);
    ts.push_back(t);
    const auto [drop_ref, drop_cont] = draw_condition_drop(rng, drop);
    scene_rows.push_back(drop_ref
                             ? reshape(nulls.scene, {1, scene_dim})
                             : Tensor::from({1, scene_dim}, item.scene));
    contents.push_back(drop_cont
                           ? nulls.content
                           : content_encoder.forward(item.content_mel).sequence);
  }
  auto x_t = xts.size() == 1 ? xts[0] : concat(xts, 0);
  auto eps_true = epss.size() == 1 ? epss[0] : concat(epss, 0);
  auto scene = scene_rows.size() == 1 ? scene_rows[0] : concat(scene_rows, 0);
  auto eps_hat = unet.forward(x_t, ts, scene, contents);
  return mse_loss(eps_hat, eps_true);
}

// ----------------------------------------------------------------- sampling

TensorPtr ddim_sample(const EpsFn& eps_fn, const Shape& shape, int steps,
                      const NoiseSchedule& schedule, uint64_t seed) {
  require(steps >= 1 && steps <= schedule.t_train, ErrorCategory::kConfig,
          "ddim: steps must be in [1, t_train]");
  require(schedule.t_train % steps == 0, ErrorCategory::kConfig,
          "ddim: steps must divide t_train evenly");
  const int stride = schedule.t_train / steps;
  Rng rng(seed);
  auto x = Tensor::randn(shape, rng);
  for (int k = steps; k >= 1; --k) {
    const int t = k * stride;
    const int t_prev = (k - 1) * stride;
    const float ab_t = schedule.alpha_bar(t);
    const float ab_p = schedule.alpha_bar(t_prev);
    auto eps = eps_fn(x, t);
    require(eps->shape == x->shape, ErrorCategory::kDimension,
            "ddim: eps_fn returned a wrong shape");
    const float inv_sqrt_ab = 1.f / std::sqrt(ab_t);
    const float sq_one_minus = std::sqrt(1.f - ab_t);
    auto x0_hat = scale(sub(x, scale(eps, sq_one_minus)), inv_sqrt_ab);
    x = add(scale(x0_hat, std::sqrt(ab_p)), scale(eps, std::sqrt(1.f - ab_p)));
  }
  return x;
}

// ------------------------------------------------------------------- bundle

std::vector<float> LdmBundle::embed_reference_audio(
    const Waveform& reference) const {
  return scene_encoder.encode_audio(wav_to_logmel(reference));
}

std::vector<float> LdmBundle::embed_reference_text(
    const std::string& caption) const {
  return scene_encoder.encode_text(caption);
}

MelSpectrogram LdmBundle::transfer(const Waveform& content_wav,
                                   const std::vector<float>& scene_embedding,
                                   const GuidanceWeights& w,
                                   uint64_t seed) const {
  require(static_cast<int>(scene_embedding.size()) == unet.config().scene_dim,
          ErrorCategory::kDimension, "transfer: bad scene embedding size");
  const auto content_mel = wav_to_logmel(content_wav);
  const auto cond = content_encoder.forward(content_mel);
  const int tq = content_mel.frames / 4;
  const Shape latent_shape = {1, vae.config().latent_ch, 16, tq};

  auto scene_row = Tensor::from({1, unet.config().scene_dim}, scene_embedding);
  auto null_scene = reshape(nulls.scene, {1, unet.config().scene_dim});

  EpsFn eps_fn = [&](const TensorPtr& x_t, int t) -> TensorPtr {
    // one batched U-Net call covering the guidance branches
    if (cfg.cfg_mode == CfgMode::kComposable) {
      auto x3 = concat({x_t, x_t, x_t}, 0);
      auto scene3 = concat({null_scene, scene_row, null_scene}, 0);
      std::vector<TensorPtr> content3 = {nulls.content, nulls.content,
                                         cond.sequence};
      auto out = unet.forward(x3, {t, t, t}, scene3, content3);
      return dual_cfg(narrow(out, 0, 0, 1), narrow(out, 0, 1, 1),
                      narrow(out, 0, 2, 1), w);
    }
    // cascaded form: eps_uu + w_ref (eps_ru - eps_uu) + w_cont (eps_rc - eps_ru)
    auto x3 = concat({x_t, x_t, x_t}, 0);
    auto scene3 = concat({null_scene, scene_row, scene_row}, 0);
    std::vector<TensorPtr> content3 = {nulls.content, nulls.content,
                                       cond.sequence};
    auto out = unet.forward(x3, {t, t, t}, scene3, content3);
    auto uu = narrow(out, 0, 0, 1), ru = narrow(out, 0, 1, 1),
         rc = narrow(out, 0, 2, 1);
    auto res = Tensor::zeros(uu->shape);
    for (size_t i = 0; i < res->data.size(); ++i)
      res->data[i] = (w.w_cont * rc->data[i] +
                      (w.w_ref - w.w_cont) * ru->data[i]) +
                     (1.f - w.w_ref) * uu->data[i];
    return res;
  };

  auto z = ddim_sample(eps_fn, latent_shape, cfg.ddim_steps, schedule, seed);
  if (cfg.latent_scale != 0.f && cfg.latent_scale != 1.f)
    z = scale(z, 1.f / cfg.latent_scale);
  auto recon = vae.decode(z);
  auto mel = vae.tensor_to_mel(recon, 0);
  mel.power_floor = content_mel.power_floor;
  mel.hop_seconds = content_mel.hop_seconds;
  mel.frame_seconds = content_mel.frame_seconds;
  return mel;
}

namespace {
constexpr const char* kBundleJson = "bundle.json";
}

void LdmBundle::save(const std::string& dir) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCategory::kIo, "cannot create bundle dir " + dir);
  scene_encoder.save((fs::path(dir) / "scene").string());
  vae.save((fs::path(dir) / "vae").string());
  content_encoder.save((fs::path(dir) / "content").string());

  auto unet_params = unet.parameters();
  auto null_params = nulls.parameters();
  std::vector<NamedParam> all = unet_params;
  all.insert(all.end(), null_params.begin(), null_params.end());
  json unet_extra;
  unet_extra["kind"] = "unet";
  unet_extra["latent_ch"] = unet.config().latent_ch;
  unet_extra["scene_dim"] = unet.config().scene_dim;
  unet_extra["widths"] = unet.config().widths;
  unet_extra["time_dim"] = unet.config().time_dim;
  unet_extra["xattn_heads"] = unet.config().xattn_heads;
  unet_extra["content_width"] = unet.config().content_width;
  save_checkpoint((fs::path(dir) / "unet").string(), all, unet_extra);

  json b;
  b["format"] = "ast-bundle-v1";
  b["t_train"] = cfg.t_train;
  b["beta_min"] = cfg.beta_min;
  b["beta_max"] = cfg.beta_max;
  b["ddim_steps"] = cfg.ddim_steps;
  b["w_ref"] = cfg.guidance.w_ref;
  b["w_cont"] = cfg.guidance.w_cont;
  b["cfg_mode"] =
      cfg.cfg_mode == CfgMode::kComposable ? "composable" : "cascaded";
  b["latent_scale"] = cfg.latent_scale;
  b["fingerprints"] = {
      {"scene", params_fingerprint(scene_encoder.parameters())},
      {"vae", params_fingerprint(vae.parameters())},
      {"content", params_fingerprint(content_encoder.parameters())},
      {"unet", params_fingerprint(all)},
  };
  std::ofstream f(fs::path(dir) / kBundleJson);
  require(f.good(), ErrorCategory::kIo, "cannot write bundle.json in " + dir);
  f << b.dump(2) << "\n";
}

LdmBundle LdmBundle::load(const std::string& dir) {
  std::ifstream f(fs::path(dir) / kBundleJson);
  require(f.good(), ErrorCategory::kDependency,
          "no trained bundle at " + dir + " (missing bundle.json)");
  json b;
  f >> b;
  require(b.value("format", "") == "ast-bundle-v1", ErrorCategory::kInput,
          "unrecognized bundle format in " + dir);

  json unet_extra = load_checkpoint_extra((fs::path(dir) / "unet").string());
  UNetConfig ucfg;
  ucfg.latent_ch = unet_extra.at("latent_ch").get<int>();
  ucfg.scene_dim = unet_extra.at("scene_dim").get<int>();
  ucfg.widths = unet_extra.at("widths").get<std::vector<int>>();
  ucfg.time_dim = unet_extra.at("time_dim").get<int>();
  ucfg.xattn_heads = unet_extra.at("xattn_heads").get<int>();
  ucfg.content_width = unet_extra.at("content_width").get<int>();

  BundleConfig bcfg;
  bcfg.t_train = b.at("t_train").get<int>();
  bcfg.beta_min = b.at("beta_min").get<float>();
  bcfg.beta_max = b.at("beta_max").get<float>();
  bcfg.ddim_steps = b.at("ddim_steps").get<int>();
  bcfg.guidance.w_ref = b.at("w_ref").get<float>();
  bcfg.guidance.w_cont = b.at("w_cont").get<float>();
  bcfg.cfg_mode = b.at("cfg_mode").get<std::string>() == "cascaded"
                      ? CfgMode::kCascaded
                      : CfgMode::kComposable;
  bcfg.latent_scale = b.at("latent_scale").get<float>();

  LdmBundle bundle{
      SceneEncoder::load((fs::path(dir) / "scene").string()),
      Vae::load((fs::path(dir) / "vae").string()),
      ContentEncoder::load((fs::path(dir) / "content").string()),
      UNet(ucfg, 0),
      NullConditions::init(ucfg, 0),
      make_schedule(bcfg.t_train, bcfg.beta_min, bcfg.beta_max),
      bcfg,
  };
  auto unet_params = bundle.unet.parameters();
  auto null_params = bundle.nulls.parameters();
  std::vector<NamedParam> all = unet_params;
  all.insert(all.end(), null_params.begin(), null_params.end());
  load_checkpoint((fs::path(dir) / "unet").string(), all);

  const auto& fp = b.at("fingerprints");
  require(fp.at("unet").get<uint64_t>() == params_fingerprint(all),
          ErrorCategory::kInput, "bundle unet fingerprint mismatch in " + dir);
  return bundle;
}

}  // namespace ast
