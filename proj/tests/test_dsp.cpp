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
#include <numeric>

#include "ast/dsp.h"
#include "ast/rng.h"
#include "ast/wav_io.h"

using namespace ast;

namespace {

Waveform sine(float hz, float seconds, float amp = 0.5f) {
  Waveform w;
  w.samples.resize(static_cast<size_t>(seconds * kSampleRate));
  for (size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] =
        amp * std::sin(2.f * static_cast<float>(M_PI) * hz * i / kSampleRate);
  return w;
}

Waveform white(float seconds, float amp, uint64_t seed) {
  Rng rng(seed);
  Waveform w;
  w.samples.resize(static_cast<size_t>(seconds * kSampleRate));
  for (auto& s : w.samples) s = amp * rng.normal();
  return w;
}

float measured_snr_db(const Waveform& mix, const Waveform& speech,
                      const Waveform& noise) {
  // The mixture lies in span(speech, looped noise); solve the 2x2 normal
  // equations for the component scales and compare energies.
  const size_t n = mix.samples.size();
  std::vector<double> nl(n);
  for (size_t i = 0; i < n; ++i) nl[i] = noise.samples[i % noise.samples.size()];
  double ss = 0, sn = 0, nn = 0, sm = 0, nm = 0;
  for (size_t i = 0; i < n; ++i) {
    const double s = speech.samples[i], v = nl[i], m = mix.samples[i];
    ss += s * s;
    sn += s * v;
    nn += v * v;
    sm += s * m;
    nm += v * m;
  }
  const double det = ss * nn - sn * sn;
  const double a = (sm * nn - sn * nm) / det;
  const double b = (ss * nm - sn * sm) / det;
  return static_cast<float>(10.0 * std::log10((a * a * ss) / (b * b * nn)));
}

}  // namespace

TEST_CASE("stft frame count and zero input") {
  Waveform w;
  w.samples.assign(16000, 0.f);
  auto spec = stft(w);
  CHECK(spec.frames == 101);
  CHECK(spec.bins == 513);
  for (const auto& c : spec.v) CHECK(std::abs(c) == 0.f);

  Waveform empty;
  CHECK_THROWS_AS(stft(empty), Error);
}

TEST_CASE("stft of 1 kHz sine peaks at bin 64 in every interior frame") {
  auto w = sine(1000.f, 1.f);
  auto spec = stft(w);
  for (int t = 4; t <= 96; ++t) {
    int arg = 0;
    float best = -1.f;
    for (int k = 0; k < spec.bins; ++k) {
      const float m = std::abs(spec.at(t, k));
      if (m > best) {
        best = m;
        arg = k;
      }
    }
    CHECK(arg == 64);
  }
}

TEST_CASE("stft magnitudes match a direct DFT oracle") {
  Rng rng(3);
  Waveform w;
  w.samples.resize(4000);
  for (auto& s : w.samples) s = rng.uniform(-0.5f, 0.5f);
  auto spec = stft(w);

  // recompute frame 10 by brute force on the same padded/windowed segment
  const int n_fft = 1024, hop = 160, pad = 512, t = 10;
  std::vector<float> seg(n_fft);
  for (int i = 0; i < n_fft; ++i) {
    int idx = t * hop - pad + i;
    const int n = static_cast<int>(w.samples.size());
    const int period = 2 * (n - 1);
    idx = ((idx % period) + period) % period;
    if (idx >= n) idx = period - idx;
    const float win =
        0.5f - 0.5f * std::cos(2.f * static_cast<float>(M_PI) * i / n_fft);
    seg[static_cast<size_t>(i)] = w.samples[static_cast<size_t>(idx)] * win;
  }
  float max_mag = 0.f;
  for (int k = 0; k < spec.bins; ++k)
    max_mag = std::max(max_mag, std::abs(spec.at(t, k)));
  for (int k = 0; k < spec.bins; k += 17) {
    double re = 0, im = 0;
    for (int i = 0; i < n_fft; ++i) {
      const double a = -2.0 * M_PI * k * i / n_fft;
      re += seg[static_cast<size_t>(i)] * std::cos(a);
      im += seg[static_cast<size_t>(i)] * std::sin(a);
    }
    const double mag = std::hypot(re, im);
    CHECK(std::fabs(std::abs(spec.at(t, k)) - mag) < 1e-3 * max_mag + 1e-4);
  }
}

TEST_CASE("stft/istft round trip reconstructs interior samples") {
  auto w = white(1.f, 0.3f, 17);
  auto spec = stft(w);
  auto rec = istft(spec, static_cast<int>(w.size()));
  const float peak = w.peak();
  for (int i = 1024; i < static_cast<int>(w.size()) - 1024; ++i) {
    CHECK(std::fabs(rec.samples[static_cast<size_t>(i)] -
                    w.samples[static_cast<size_t>(i)]) < 1e-4f * peak);
  }
}

TEST_CASE("mel filterbank structure") {
  MelFilterbank fb;
  // rows nonnegative with at least one positive entry
  for (int b = 0; b < fb.bands(); ++b) {
    float mx = 0.f;
    for (int k = 0; k < fb.bins(); ++k) {
      CHECK(fb.weight(b, k) >= 0.f);
      mx = std::max(mx, fb.weight(b, k));
    }
    CHECK(mx > 0.f);
  }
  // every interior bin in (0, 8 kHz) covered
  for (int k = 1; k < fb.bins() - 1; ++k) {
    float cover = 0.f;
    for (int b = 0; b < fb.bands(); ++b) cover += fb.weight(b, k);
    CHECK(cover > 0.f);
  }
  // centers strictly increasing
  for (int b = 1; b < fb.bands(); ++b)
    CHECK(fb.center_hz(b) > fb.center_hz(b - 1));
}

TEST_CASE("wav_to_logmel of silence hits the log floor everywhere") {
  Waveform w;
  w.samples.assign(16000, 0.f);
  auto mel = wav_to_logmel(w);
  CHECK(mel.frames == 100);  // 101 cropped to a multiple of 4
  CHECK(mel.n_mels == 64);
  const float floor_log = std::log(1e-5f);
  for (float v : mel.values) CHECK(v == doctest::Approx(floor_log));
}

TEST_CASE("doubling a noise waveform shifts log-mel by log(4)") {
  auto w = white(1.f, 0.25f, 5);
  Waveform w2 = w;
  for (auto& s : w2.samples) s *= 2.f;
  auto m1 = wav_to_logmel(w);
  auto m2 = wav_to_logmel(w2);
  const float lg4 = std::log(4.f);
  for (size_t i = 0; i < m1.values.size(); ++i)
    CHECK(std::fabs(m2.values[i] - m1.values[i] - lg4) < 0.02f);
}

TEST_CASE("griffin_lim objective is non-increasing") {
  auto w = sine(440.f, 0.5f, 0.4f);
  auto mel = wav_to_logmel(w);
  auto obj = griffin_lim_objective(mel, 16, 9);
  REQUIRE(obj.size() == 16);
  for (size_t i = 1; i < obj.size(); ++i) CHECK(obj[i] <= obj[i - 1] + 1e-6f);
  // round-trip error after iterating is lower than at iteration 0
  CHECK(obj.back() < obj.front());
}

TEST_CASE("griffin_lim keeps a sine's dominant mel band") {
  auto w = sine(1000.f, 0.5f, 0.4f);
  auto mel = wav_to_logmel(w);
  auto out = griffin_lim(mel, 32, 4);
  auto mel2 = wav_to_logmel(out);

  auto argmax_band = [](const MelSpectrogram& m) {
    std::vector<double> e(static_cast<size_t>(m.n_mels), 0.0);
    for (int b = 0; b < m.n_mels; ++b)
      for (int t = 0; t < m.frames; ++t) e[static_cast<size_t>(b)] += m.at(b, t);
    return static_cast<int>(std::max_element(e.begin(), e.end()) - e.begin());
  };
  CHECK(std::abs(argmax_band(mel2) - argmax_band(mel)) <= 1);
}

TEST_CASE("griffin_lim of an all-floor mel is near silence") {
  MelSpectrogram mel;
  mel.n_mels = 64;
  mel.frames = 40;
  mel.values.assign(64 * 40, std::log(1e-5f));
  auto out = griffin_lim(mel, 8, 1);
  CHECK(out.rms() < 1e-3f);
}

TEST_CASE("convolve_rir identity and shift") {
  auto w = white(0.3f, 0.2f, 30);
  Rir delta{{1.f}, 0.f};
  auto out = convolve_rir(w, delta);
  CHECK(out.samples == w.samples);  // exact identity

  const int d = 37;
  Rir delay;
  delay.taps.assign(d + 1, 0.f);
  delay.taps[d] = 1.f;
  auto shifted = convolve_rir(w, delay);
  for (size_t i = d; i < w.samples.size(); ++i)
    CHECK(shifted.samples[i] == doctest::Approx(w.samples[i - d]).epsilon(1e-5));
  for (int i = 0; i < d; ++i) CHECK(shifted.samples[static_cast<size_t>(i)] == 0.f);

  Rir empty;
  CHECK_THROWS_AS(convolve_rir(w, empty), Error);
}

TEST_CASE("convolve_rir matches the naive convolution oracle") {
  Rng rng(8);
  auto w = white(0.25f, 0.2f, 31);
  Rir h;
  h.taps.resize(500);  // long enough to take the FFT path
  for (auto& t : h.taps) t = rng.uniform(-0.2f, 0.2f);
  auto out = convolve_rir(w, h);

  std::vector<double> ref(w.samples.size(), 0.0);
  for (size_t i = 0; i < w.samples.size(); ++i)
    for (size_t j = 0; j < h.taps.size() && j <= i; ++j)
      ref[i] += static_cast<double>(w.samples[i - j]) * h.taps[j];
  double ref_peak = 0;
  for (double v : ref) ref_peak = std::max(ref_peak, std::fabs(v));
  const double g = w.peak() / ref_peak;
  for (size_t i = 0; i < ref.size(); ++i)
    CHECK(std::fabs(out.samples[i] - ref[i] * g) < 1e-5);
}

TEST_CASE("mix_at_snr gains") {
  auto s = sine(500.f, 0.5f, 0.1f);
  auto n = white(0.5f, 1.f, 77);
  // scale noise to the speech RMS exactly
  const float k = s.rms() / n.rms();
  for (auto& x : n.samples) x *= k;

  auto m0 = mix_at_snr(s, n, 0.f);
  for (size_t i = 0; i < s.samples.size(); ++i)  // g == 1
    CHECK(m0.samples[i] ==
          doctest::Approx(s.samples[i] + n.samples[i]).epsilon(1e-4));

  auto m20 = mix_at_snr(s, n, 20.f);
  for (size_t i = 0; i < s.samples.size(); ++i)  // g == 0.1
    CHECK(m20.samples[i] ==
          doctest::Approx(s.samples[i] + 0.1f * n.samples[i]).epsilon(1e-4));

  auto m4 = mix_at_snr(s, n, 4.f);
  CHECK(std::fabs(measured_snr_db(m4, s, n) - 4.f) < 0.1f);

  Waveform silent;
  silent.samples.assign(1000, 0.f);
  CHECK_THROWS_AS(mix_at_snr(silent, n, 10.f), Error);
  CHECK_THROWS_AS(mix_at_snr(s, silent, 10.f), Error);
}

TEST_CASE("mix_at_snr holds the target over 100 random draws in [4,20] dB") {
  Rng rng(99);
  for (int it = 0; it < 100; ++it) {
    auto s = white(0.25f, 0.05f, 1000 + it);
    auto n = white(0.37f, 0.08f, 2000 + it);  // different length: loops
    const float target = rng.uniform(4.f, 20.f);
    auto m = mix_at_snr(s, n, target);
    CHECK(std::fabs(measured_snr_db(m, s, n) - target) < 0.1f);
  }
}

TEST_CASE("chunk_or_pad length contract") {
  auto w = white(0.7f, 0.2f, 3);
  auto padded = chunk_or_pad(w, 10.f, 1);
  CHECK(padded.size() == 160000);
  for (size_t i = w.samples.size(); i < padded.samples.size(); ++i)
    CHECK(padded.samples[i] == 0.f);
  for (size_t i = 0; i < w.samples.size(); ++i)
    CHECK(padded.samples[i] == w.samples[i]);

  auto same = chunk_or_pad(w, 0.7f, 1);
  CHECK(same.samples == w.samples);

  auto longer = white(2.f, 0.2f, 4);
  auto cut = chunk_or_pad(longer, 1.f, 5);
  CHECK(cut.size() == 16000);
  auto cut2 = chunk_or_pad(longer, 1.f, 5);
  CHECK(cut.samples == cut2.samples);  // seeded offset is deterministic
}

TEST_CASE("wav files round trip") {
  Rng rng(12);
  Waveform w;
  w.samples.resize(3200);
  for (auto& x : w.samples) x = rng.uniform(-0.9f, 0.9f);
  const auto path =
      (std::filesystem::temp_directory_path() / "ast_io_test.wav").string();
  write_wav(path, w);
  auto r = read_wav(path);
  CHECK(r.sample_rate == 16000);
  REQUIRE(r.size() == w.size());
  for (size_t i = 0; i < w.samples.size(); ++i)
    CHECK(std::fabs(r.samples[i] - w.samples[i]) <= 0.5f / 32767.f);
  // quantized values survive a second round trip bit-exactly
  write_wav(path, r);
  auto r2 = read_wav(path);
  CHECK(r2.samples == r.samples);
  std::filesystem::remove(path);
}
