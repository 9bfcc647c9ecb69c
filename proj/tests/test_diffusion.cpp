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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ast/adam.h"
#include "ast/diffusion.h"
#include "ast/scene_sim.h"

using namespace ast;
namespace fs = std::filesystem;

namespace {

UNetConfig small_unet_config() {
  UNetConfig cfg;
  cfg.widths = {8, 12, 16};
  cfg.time_dim = 16;
  cfg.xattn_heads = 2;
  cfg.content_width = 24;
  return cfg;
}

LdmBundle make_toy_bundle(uint64_t seed) {
  SceneEncoderConfig scfg;
  VaeConfig vcfg;
  ContentEncoderConfig ccfg;
  ccfg.width = 24;
  ccfg.heads = 2;
  ccfg.filter_layers = 1;
  ccfg.embed_layers = 1;
  UNetConfig ucfg = small_unet_config();
  BundleConfig bcfg;
  bcfg.ddim_steps = 10;
  return LdmBundle{
      SceneEncoder(scfg, caption_vocabulary(), seed),
      Vae(vcfg, seed + 1),
      ContentEncoder(ccfg, seed + 2),
      UNet(ucfg, seed + 3),
      NullConditions::init(ucfg, seed + 4),
      make_schedule(bcfg.t_train, bcfg.beta_min, bcfg.beta_max),
      bcfg,
  };
}

}  // namespace

TEST_CASE("noise schedule endpoints and monotonicity") {
  auto s = make_schedule();
  CHECK(std::fabs(s.alpha_bar(1) - (1.f - 1e-4f)) < 1e-9f);
  for (int t = 2; t <= s.t_train; ++t)
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
  CHECK(s.alpha_bar(s.t_train) < 0.01f);
  for (int t = 1; t < s.t_train; ++t)
    CHECK(s.betas[static_cast<size_t>(t)] > s.betas[static_cast<size_t>(t) - 1]);

  // direct double-precision product oracle
  double prod = 1.0;
  for (int i = 0; i < s.t_train; ++i)
    prod *= 1.0 - static_cast<double>(s.betas[static_cast<size_t>(i)]);
  CHECK(std::fabs(prod - s.alpha_bar(s.t_train)) < 1e-6);

  CHECK_THROWS_AS(make_schedule(1000, 2e-2f, 1e-4f), Error);
  CHECK_THROWS_AS(make_schedule(1000, 0.f, 1e-2f), Error);
}

TEST_CASE("q_sample formula and limits") {
  auto s = make_schedule();
  Rng rng(5);
  auto x0 = Tensor::randn({2, 3, 4, 4}, rng);
  auto eps = Tensor::randn({2, 3, 4, 4}, rng);

  auto xt = q_sample(x0, 500, eps, s);
  const float ab = s.alpha_bar(500);
  for (size_t i = 0; i < xt->data.size(); ++i)
    CHECK(xt->data[i] == doctest::Approx(std::sqrt(ab) * x0->data[i] +
                                         std::sqrt(1.f - ab) * eps->data[i]));

  // limits: near t=1 the sample is x0, near t=T it is the noise
  auto x1 = q_sample(x0, 1, eps, s);
  for (size_t i = 0; i < x1->data.size(); ++i)
    CHECK(std::fabs(x1->data[i] - x0->data[i]) <=
          0.011f * std::fabs(eps->data[i]) + 1e-4f);
  auto xT = q_sample(x0, s.t_train, eps, s);
  for (size_t i = 0; i < xT->data.size(); ++i)
    CHECK(std::fabs(xT->data[i] - eps->data[i]) < 0.05f);

  CHECK_THROWS_AS(q_sample(x0, 0, eps, s), Error);
  CHECK_THROWS_AS(q_sample(x0, s.t_train + 1, eps, s), Error);
}

TEST_CASE("q_sample is linear in (x0, eps)") {
  auto s = make_schedule();
  Rng rng(7);
  auto x0 = Tensor::randn({3, 5}, rng);
  auto eps = Tensor::randn({3, 5}, rng);
  const float a = 2.7f;
  auto lhs = q_sample(scale(x0, a), 300, scale(eps, a), s);
  auto rhs = scale(q_sample(x0, 300, eps, s), a);
  for (size_t i = 0; i < lhs->data.size(); ++i)
    CHECK(lhs->data[i] == doctest::Approx(rhs->data[i]).epsilon(1e-6));
}

TEST_CASE("q_sample variance matches the forward process (Monte Carlo)") {
  auto s = make_schedule();
  const int t = 500;
  const float ab = s.alpha_bar(t);
  Rng rng(11);
  const float var_x0 = 4.f;
  double sum = 0, sum2 = 0;
  const int draws = 10000;
  const int numel = 16;
  for (int d = 0; d < draws; ++d) {
    auto x0 = Tensor::randn({numel}, rng, std::sqrt(var_x0));
    auto eps = Tensor::randn({numel}, rng);
    auto xt = q_sample(x0, t, eps, s);
    for (float v : xt->data) {
      sum += v;
      sum2 += static_cast<double>(v) * v;
    }
  }
  const double n = static_cast<double>(draws) * numel;
  const double var = sum2 / n - (sum / n) * (sum / n);
  const double expect = ab * var_x0 + (1.f - ab);
  CHECK(std::fabs(var - expect) / expect < 0.05);
}

TEST_CASE("dual_cfg reductions hold exactly") {
  Rng rng(3);
  auto uu = Tensor::randn({4, 7}, rng);
  auto ru = Tensor::randn({4, 7}, rng);
  auto uc = Tensor::randn({4, 7}, rng);

  auto zero = dual_cfg(uu, ru, uc, {0.f, 0.f});
  CHECK(zero->data == uu->data);

  auto scene_only = dual_cfg(uu, ru, uc, {1.f, 0.f});
  CHECK(scene_only->data == ru->data);

  auto both = dual_cfg(uu, ru, uc, {1.f, 1.f});
  for (size_t i = 0; i < both->data.size(); ++i)
    CHECK(both->data[i] == ru->data[i] + uc->data[i] - uu->data[i]);

  auto bad = Tensor::zeros({4, 6});
  CHECK_THROWS_AS(dual_cfg(uu, ru, bad, {1.f, 1.f}), Error);
}

TEST_CASE("unet keeps the latent shape and responds to conditions") {
  auto cfg = small_unet_config();
  UNet unet(cfg, 9);
  Rng rng(13);
  for (int tq : {25, 50}) {
    auto x = Tensor::randn({1, cfg.latent_ch, 16, tq}, rng);
    auto scene = Tensor::randn({1, cfg.scene_dim}, rng);
    auto content = Tensor::randn({6, cfg.content_width}, rng);
    auto out = unet.forward(x, {100}, scene, {content});
    CHECK(out->shape == x->shape);
    CHECK(out->all_finite());

    // a different scene embedding must change the prediction
    auto scene2 = Tensor::randn({1, cfg.scene_dim}, rng);
    auto out2 = unet.forward(x, {100}, scene2, {content});
    double diff = 0;
    for (size_t i = 0; i < out->data.size(); ++i) {
      const double d = out->data[i] - out2->data[i];
      diff += d * d;
    }
    CHECK(diff > 0.0);
  }
}

TEST_CASE("cross-attention path carries gradient to the content sequence") {
  auto cfg = small_unet_config();
  UNet unet(cfg, 21);
  Rng rng(5);
  auto x = Tensor::randn({1, cfg.latent_ch, 16, 8}, rng);
  auto scene = Tensor::randn({1, cfg.scene_dim}, rng);
  auto content = Tensor::randn({4, cfg.content_width}, rng, 1.f, true);

  content->ensure_grad();
  content->zero_grad();
  float loss_val = 0.f;
  {
    Tape tape;
    TapeScope scope(tape);
    auto out = unet.forward(x, {37}, scene, {content});
    auto loss = mean(mul(out, out));
    loss_val = loss->value();
    tape.backward(loss);
  }
  double gnorm = 0;
  size_t argmax = 0;
  for (size_t i = 0; i < content->grad.size(); ++i) {
    gnorm += static_cast<double>(content->grad[i]) * content->grad[i];
    if (std::fabs(content->grad[i]) > std::fabs(content->grad[argmax]))
      argmax = i;
  }
  CHECK(gnorm > 0.0);

  // finite-difference spot check on the strongest coordinate
  const float eps = 1e-2f;
  const float saved = content->data[argmax];
  auto eval = [&] {
    auto out = unet.forward(x, {37}, scene, {content});
    double s = 0;
    for (float v : out->data) s += static_cast<double>(v) * v;
    return static_cast<float>(s / static_cast<double>(out->data.size()));
  };
  content->data[argmax] = saved + eps;
  const float up = eval();
  content->data[argmax] = saved - eps;
  const float dn = eval();
  content->data[argmax] = saved;
  const float fd = (up - dn) / (2.f * eps);
  CHECK(fd == doctest::Approx(content->grad[argmax]).epsilon(0.05));
  (void)loss_val;
}

TEST_CASE("condition dropout hits its rate over ten thousand draws") {
  Rng rng(2024);
  const CondDropConfig drop;
  int ref = 0, cont = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto [dr, dc] = draw_condition_drop(rng, drop);
    ref += dr;
    cont += dc;
  }
  CHECK(std::fabs(ref / static_cast<double>(n) - 0.1) < 0.01);
  CHECK(std::fabs(cont / static_cast<double>(n) - 0.1) < 0.01);
}

TEST_CASE("training leaves frozen components untouched") {
  auto bundle = make_toy_bundle(31);
  auto scene_params = bundle.scene_encoder.parameters();
  auto vae_params = bundle.vae.parameters();
  set_trainable(scene_params, false);
  set_trainable(vae_params, false);
  const uint64_t scene_fp = params_fingerprint(scene_params);
  const uint64_t vae_fp = params_fingerprint(vae_params);

  // tiny items built through the frozen encoders
  std::vector<LdmTrainItem> items;
  for (int i = 0; i < 2; ++i) {
    auto w = synth_speech(SpeakerSpec::from_id(i), ContentSpec::from_id(i),
                          0.5f, 100 + static_cast<uint64_t>(i));
    auto mel = wav_to_logmel(w);
    LdmTrainItem item;
    item.x0 = bundle.vae.encode(mel_to_tensor(mel, bundle.vae.config().mel_norm)).mu;
    item.scene = bundle.scene_encoder.encode_audio(mel);
    item.content_mel = mel;
    items.push_back(std::move(item));
  }
  std::vector<const LdmTrainItem*> batch = {&items[0], &items[1]};

  auto trainable = bundle.unet.parameters();
  auto cp = bundle.content_encoder.parameters();
  auto np = bundle.nulls.parameters();
  trainable.insert(trainable.end(), cp.begin(), cp.end());
  trainable.insert(trainable.end(), np.begin(), np.end());
  Adam opt(trainable, {.lr = 1e-3f});

  Rng rng(7);
  CondDropConfig drop;
  for (int step = 0; step < 10; ++step) {
    Tape tape;
    TapeScope scope(tape);
    auto loss = ldm_training_loss(bundle.unet, bundle.nulls,
                                  bundle.content_encoder, batch,
                                  bundle.schedule, drop, rng);
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
  }
  CHECK(params_fingerprint(scene_params) == scene_fp);
  CHECK(params_fingerprint(vae_params) == vae_fp);

  std::vector<const LdmTrainItem*> empty;
  CHECK_THROWS_AS(ldm_training_loss(bundle.unet, bundle.nulls,
                                    bundle.content_encoder, empty,
                                    bundle.schedule, drop, rng),
                  Error);
}

TEST_CASE("ddim is deterministic and rejects bad step counts") {
  auto s = make_schedule();
  EpsFn eps_fn = [](const TensorPtr& x, int) { return scale(ast::tanh(x), 0.5f); };
  auto a = ddim_sample(eps_fn, {1, 2, 4, 4}, 20, s, 99);
  auto b = ddim_sample(eps_fn, {1, 2, 4, 4}, 20, s, 99);
  CHECK(a->data == b->data);  // bitwise
  auto c = ddim_sample(eps_fn, {1, 2, 4, 4}, 20, s, 100);
  CHECK(a->data != c->data);

  CHECK_THROWS_AS(ddim_sample(eps_fn, {1, 2, 4, 4}, 2000, s, 1), Error);
  CHECK_THROWS_AS(ddim_sample(eps_fn, {1, 2, 4, 4}, 3, s, 1), Error);  // 1000 % 3
}

TEST_CASE("one DDIM step inverts q_sample when the oracle eps is returned") {
  auto s = make_schedule();
  Rng rng(17);
  auto x0 = Tensor::randn({2, 3, 4}, rng);
  // The sampler draws x_T itself; express the matching eps from its input.
  const float ab = s.alpha_bar(s.t_train);
  EpsFn oracle = [&](const TensorPtr& xt, int t) {
    CHECK(t == s.t_train);
    auto e = Tensor::zeros(xt->shape);
    for (size_t i = 0; i < e->data.size(); ++i)
      e->data[i] = (xt->data[i] - std::sqrt(ab) * x0->data[i]) /
                   std::sqrt(1.f - ab);
    return e;
  };
  auto out = ddim_sample(oracle, x0->shape, 1, s, 4);
  for (size_t i = 0; i < out->data.size(); ++i)
    CHECK(std::fabs(out->data[i] - x0->data[i]) < 1e-5f);
}

TEST_CASE("full-step DDIM equals a manual stride-1 loop bitwise") {
  auto s = make_schedule(8, 1e-3f, 2e-2f);
  EpsFn eps_fn = [](const TensorPtr& x, int) {
    auto e = Tensor::zeros(x->shape);
    for (size_t i = 0; i < e->data.size(); ++i)
      e->data[i] = std::tanh(x->data[i]) * 0.5f;
    return e;
  };
  auto sampled = ddim_sample(eps_fn, {3, 5}, 8, s, 12);

  // manual replay with identical arithmetic order
  Rng rng(12);
  auto x = Tensor::randn({3, 5}, rng);
  for (int t = 8; t >= 1; --t) {
    const float ab_t = s.alpha_bar(t);
    const float ab_p = s.alpha_bar(t - 1);
    auto eps = eps_fn(x, t);
    const float inv_sqrt_ab = 1.f / std::sqrt(ab_t);
    const float sq1m = std::sqrt(1.f - ab_t);
    auto next = Tensor::zeros(x->shape);
    for (size_t i = 0; i < x->data.size(); ++i) {
      const float x0h = (x->data[i] - eps->data[i] * sq1m) * inv_sqrt_ab;
      next->data[i] =
          x0h * std::sqrt(ab_p) + eps->data[i] * std::sqrt(1.f - ab_p);
    }
    x = next;
  }
  CHECK(sampled->data == x->data);  // bitwise
}

TEST_CASE("ddim endpoint matches the Gaussian closed form") {
  auto s = make_schedule();
  const float mu0 = 2.f;
  // exact eps-predictor for x0 ~ N(mu0, I)
  EpsFn eps_fn = [&](const TensorPtr& xt, int t) {
    const float ab = s.alpha_bar(t);
    auto e = Tensor::zeros(xt->shape);
    const float sq_ab = std::sqrt(ab), sq1m = std::sqrt(1.f - ab);
    for (size_t i = 0; i < e->data.size(); ++i)
      e->data[i] = sq1m * (xt->data[i] - sq_ab * mu0);
    return e;
  };
  const Shape shape = {1, 8, 16, 25};
  const uint64_t seed = 7;
  auto out = ddim_sample(eps_fn, shape, 100, s, seed);

  // closed-form linear recursion in double precision
  double c = 1.0, d = 0.0;
  for (int k = 100; k >= 1; --k) {
    const double ab_t = s.alpha_bar(k * 10);
    const double ab_p = s.alpha_bar((k - 1) * 10);
    const double a = std::sqrt(ab_t), b = std::sqrt(1.0 - ab_t);
    const double ap = std::sqrt(ab_p), bp = std::sqrt(1.0 - ab_p);
    const double m = ap * a + bp * b;
    d = d * m + (ap * b * b - a * b * bp);
    c *= m;
  }
  Rng rng(seed);
  auto xT = Tensor::randn(shape, rng);
  double mean_xT = 0;
  for (float v : xT->data) mean_xT += v;
  mean_xT /= static_cast<double>(xT->data.size());
  double mean_out = 0;
  for (float v : out->data) mean_out += v;
  mean_out /= static_cast<double>(out->data.size());

  const double expect = c * mean_xT + d * mu0;
  CHECK(std::fabs(mean_out - expect) < 0.02 * mu0);
}

TEST_CASE("bundle transfer is deterministic and survives a save/load") {
  auto bundle = make_toy_bundle(77);
  auto content_wav = synth_speech(SpeakerSpec::from_id(0),
                                  ContentSpec::from_id(1), 0.5f, 50);
  auto ref_wav = compose_scene(content_wav,
                               {BackgroundKind::kWhite, 0.f, 10.f}, 3);
  auto emb = bundle.embed_reference_audio(ref_wav);
  auto m1 = bundle.transfer(content_wav, emb, bundle.cfg.guidance, 5);
  auto m2 = bundle.transfer(content_wav, emb, bundle.cfg.guidance, 5);
  CHECK(m1.values == m2.values);  // bitwise
  CHECK(m1.n_mels == 64);
  CHECK(m1.frames == wav_to_logmel(content_wav).frames);

  auto emb_t = bundle.embed_reference_text("A male speaks in a quiet room");
  auto m3 = bundle.transfer(content_wav, emb_t, bundle.cfg.guidance, 5);
  CHECK(m3.frames == m1.frames);  // both modalities share the pipeline

  const auto dir = (fs::temp_directory_path() / "ast_bundle_test").string();
  fs::remove_all(dir);
  bundle.save(dir);
  auto loaded = LdmBundle::load(dir);
  auto m4 = loaded.transfer(content_wav, emb, bundle.cfg.guidance, 5);
  CHECK(m4.values == m1.values);  // bitwise through the checkpoint
  fs::remove_all(dir);
}
