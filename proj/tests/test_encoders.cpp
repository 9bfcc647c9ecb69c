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
#include "ast/encoders.h"
#include "ast/scene_sim.h"

using namespace ast;
namespace fs = std::filesystem;

namespace {

MelSpectrogram speech_mel(int speaker, int content, uint64_t seed,
                          float seconds = 0.5f) {
  auto w = synth_speech(SpeakerSpec::from_id(speaker),
                        ContentSpec::from_id(content), seconds, seed);
  return wav_to_logmel(w);
}

SceneEncoder make_scene_encoder(uint64_t seed = 1) {
  return SceneEncoder(SceneEncoderConfig{}, caption_vocabulary(), seed);
}

float norm_of(const std::vector<float>& v) {
  double s = 0;
  for (float x : v) s += static_cast<double>(x) * x;
  return static_cast<float>(std::sqrt(s));
}

}  // namespace

TEST_CASE("scene encoder embeddings are unit norm and deterministic") {
  auto enc = make_scene_encoder();
  auto mel = speech_mel(0, 0, 5);
  auto e1 = enc.encode_audio(mel);
  auto e2 = enc.encode_audio(mel);
  CHECK(std::fabs(norm_of(e1) - 1.f) < 1e-5f);
  CHECK(e1 == e2);  // bitwise

  auto t1 = enc.encode_text("A male speaks in a hall with crowd murmur behind");
  auto t2 = enc.encode_text("A male speaks in a hall with crowd murmur behind");
  CHECK(std::fabs(norm_of(t1) - 1.f) < 1e-5f);
  CHECK(t1 == t2);

  CHECK_THROWS_AS(enc.encode_text(""), Error);
  CHECK_THROWS_AS(enc.encode_text("   ,,, "), Error);
}

TEST_CASE("unknown words map to UNK without crashing") {
  auto enc = make_scene_encoder();
  auto e = enc.encode_text("A robot speaks underwater with zzz behind");
  CHECK(std::fabs(norm_of(e) - 1.f) < 1e-5f);
}

TEST_CASE("info_nce closed form at N=2, tau=1") {
  // unit diagonal similarity: loss = -log(e / (e + 1)) per direction
  auto a = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto b = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto loss = info_nce(a, b, 1.f);
  const float expect = -std::log(std::exp(1.f) / (std::exp(1.f) + 1.f));
  CHECK(loss->value() == doctest::Approx(expect).epsilon(1e-4));
  CHECK(loss->value() == doctest::Approx(0.3133f).epsilon(1e-3));
}

TEST_CASE("info_nce is invariant to batch permutation") {
  Rng rng(3);
  const int n = 6, d = 16;
  auto a = Tensor::randn({n, d}, rng);
  auto b = Tensor::randn({n, d}, rng);
  auto base = info_nce(l2_normalize_rows(a), l2_normalize_rows(b), 0.5f);

  std::vector<int> perm = {3, 1, 5, 0, 4, 2};
  auto pa = Tensor::zeros({n, d});
  auto pb = Tensor::zeros({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      pa->data[static_cast<size_t>(i) * d + j] =
          a->data[static_cast<size_t>(perm[static_cast<size_t>(i)]) * d + j];
      pb->data[static_cast<size_t>(i) * d + j] =
          b->data[static_cast<size_t>(perm[static_cast<size_t>(i)]) * d + j];
    }
  auto permuted = info_nce(l2_normalize_rows(pa), l2_normalize_rows(pb), 0.5f);
  CHECK(permuted->value() == doctest::Approx(base->value()).epsilon(1e-5));
}

TEST_CASE("info_nce on random embeddings sits near log N") {
  Rng rng(11);
  const int n = 16;
  double acc = 0;
  const int trials = 8;
  for (int t = 0; t < trials; ++t) {
    auto a = l2_normalize_rows(Tensor::randn({n, 64}, rng));
    auto b = l2_normalize_rows(Tensor::randn({n, 64}, rng));
    acc += info_nce(a, b, 1.f)->value();
  }
  CHECK(std::fabs(acc / trials - std::log(static_cast<float>(n))) < 0.2);
}

TEST_CASE("info_nce rejects batches of one") {
  auto a = Tensor::from({1, 2}, {1, 0});
  CHECK_THROWS_AS(info_nce(a, a, 1.f), Error);
}

TEST_CASE("vae latent shape law and determinism") {
  Vae vae(VaeConfig{}, 7);
  auto mel = speech_mel(1, 2, 9, 1.f);  // 64 x 100
  REQUIRE(mel.frames == 100);
  auto x = mel_to_tensor(mel, vae.config().mel_norm);
  auto enc = vae.encode(x);
  CHECK(enc.mu->shape == Shape{1, 8, 16, 25});
  CHECK(enc.logvar->shape == Shape{1, 8, 16, 25});
  auto enc2 = vae.encode(x);
  CHECK(enc.z->data == enc2.z->data);  // eval mode: z == mu, deterministic

  auto recon = vae.decode(enc.z);
  CHECK(recon->shape == Shape{1, 1, 64, 100});

  auto zero = Tensor::zeros({1, 8, 16, 25});
  auto out = vae.decode(zero);
  CHECK(out->all_finite());

  auto bad = Tensor::zeros({1, 1, 64, 101});
  CHECK_THROWS_AS(vae.encode(bad), Error);
}

TEST_CASE("vae loss identities") {
  Vae vae(VaeConfig{}, 7);
  Rng rng(5);
  auto x = Tensor::randn({2, 1, 8, 8}, rng);
  auto zeros = Tensor::zeros({2, 4, 2, 2});
  auto loss0 = vae.loss(x, x, zeros, zeros);
  CHECK(loss0->value() == doctest::Approx(0.f).epsilon(1e-7));

  auto ones = Tensor::full({2, 4, 2, 2}, 1.f);
  auto loss1 = vae.loss(x, x, ones, zeros);
  // KL with mu=1, logvar=0 is 0.5 per dimension
  CHECK(loss1->value() ==
        doctest::Approx(0.5f * vae.config().beta).epsilon(1e-5));
}

TEST_CASE("vae overfits one small batch") {
  Vae vae(VaeConfig{}, 3);
  std::vector<MelSpectrogram> mels;
  std::vector<const MelSpectrogram*> ptrs;
  for (int i = 0; i < 2; ++i) {
    mels.push_back(speech_mel(i, i, 40 + static_cast<uint64_t>(i)));
  }
  for (const auto& m : mels) ptrs.push_back(&m);
  auto x = mel_batch_to_tensor(ptrs, vae.config().mel_norm);

  auto params = vae.parameters();
  Adam opt(params, {.lr = 2e-3f});
  float first = 0.f, last = 0.f;
  for (int step = 0; step < 20; ++step) {
    Tape tape;
    TapeScope scope(tape);
    auto enc = vae.encode(x);
    auto recon = vae.decode(enc.z);
    auto loss = vae.loss(x, recon, enc.mu, enc.logvar);
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
    if (step == 0) first = loss->value();
    last = loss->value();
  }
  CHECK(last < first);
}

TEST_CASE("content encoder mask is strictly inside (0,1)") {
  ContentEncoder enc(ContentEncoderConfig{}, 5);
  auto mel = speech_mel(2, 3, 8);
  auto cond = enc.forward(mel);
  REQUIRE(cond.mask->shape == Shape{mel.frames, 64});
  for (float m : cond.mask->data) {
    CHECK(m > 0.f);
    CHECK(m < 1.f);
  }
  CHECK(cond.sequence->shape == Shape{mel.frames / 4, 256});
  CHECK(cond.masked_logmel->shape == Shape{64, mel.frames});
}

TEST_CASE("all-ones mask reproduces the input mel exactly") {
  auto mel = speech_mel(3, 1, 2);
  auto raw = Tensor::from({64, mel.frames}, mel.values);
  auto ones = Tensor::full({mel.frames, 64}, 1.f);
  auto masked = apply_ratio_mask(raw, ones, mel.power_floor);
  CHECK(masked->data == raw->data);  // bitwise
}

TEST_CASE("ratio mask suppresses energy in the linear domain") {
  auto mel = speech_mel(3, 1, 2);
  auto raw = Tensor::from({64, mel.frames}, mel.values);
  auto half = Tensor::full({mel.frames, 64}, 0.5f);
  auto masked = apply_ratio_mask(raw, half, mel.power_floor);
  const float lg_half = std::log(0.5f);
  const float floor_log = std::log(mel.power_floor);
  for (size_t i = 0; i < masked->data.size(); ++i) {
    const float expect = std::max(raw->data[i] + lg_half, floor_log);
    CHECK(masked->data[i] == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("probe classify/embed contracts") {
  Probe probe(ProbeConfig{.classes = 8}, 3);
  auto mel = speech_mel(4, 4, 19);
  CHECK_THROWS_AS(probe.classify(mel), Error);  // untrained
  CHECK_THROWS_AS(probe.embed(mel), Error);
  probe.mark_trained();

  auto e1 = probe.embed(mel);
  auto e2 = probe.embed(mel);
  CHECK(cosine(e1, e2) == doctest::Approx(1.f).epsilon(1e-5));

  // argmax is invariant to positive rescaling of the final layer
  const int before = probe.classify(mel);
  for (auto& p : probe.parameters()) {
    if (p.name == "fc2.w" || p.name == "fc2.b")
      for (auto& v : p.tensor->data) v *= 3.f;
  }
  CHECK(probe.classify(mel) == before);
}

TEST_CASE("scene encoder round trips through its checkpoint") {
  auto enc = make_scene_encoder(21);
  auto mel = speech_mel(0, 5, 77);
  const auto dir = (fs::temp_directory_path() / "ast_scene_ckpt").string();
  enc.save(dir);
  auto loaded = SceneEncoder::load(dir);
  CHECK(loaded.encode_audio(mel) == enc.encode_audio(mel));  // bitwise
  CHECK(loaded.encode_text("A female speaks in a quiet room") ==
        enc.encode_text("A female speaks in a quiet room"));
  fs::remove_all(dir);
}

TEST_CASE("vae round trips through its checkpoint") {
  Vae vae(VaeConfig{}, 13);
  auto mel = speech_mel(5, 2, 31);
  auto x = mel_to_tensor(mel, vae.config().mel_norm);
  const auto dir = (fs::temp_directory_path() / "ast_vae_ckpt").string();
  vae.save(dir);
  auto loaded = Vae::load(dir);
  CHECK(loaded.encode(x).mu->data == vae.encode(x).mu->data);
  fs::remove_all(dir);
}
