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
// Deterministic signal processing: STFT/mel analysis, Griffin-Lim synthesis,
// RIR convolution, SNR-controlled mixing, chunking. All functions are pure.

#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "ast/error.h"

namespace ast {

inline constexpr int kSampleRate = 16000;
inline constexpr float kMelPowerFloor = 1e-5f;

struct Waveform {
  std::vector<float> samples;  // in [-1, 1]
  int sample_rate = kSampleRate;

  int64_t size() const { return static_cast<int64_t>(samples.size()); }
  float duration_seconds() const {
    return static_cast<float>(size()) / static_cast<float>(sample_rate);
  }
  float rms() const;
  float peak() const;  // max |sample|
};

// Log-power mel features, [n_mels][frames] row-major, natural log with the
// linear-power floor applied before the log.
struct MelSpectrogram {
  int n_mels = 64;
  int frames = 0;
  std::vector<float> values;
  float hop_seconds = 0.010f;
  float frame_seconds = 0.064f;
  float power_floor = kMelPowerFloor;

  float& at(int m, int t) { return values[static_cast<size_t>(m) * frames + t]; }
  float at(int m, int t) const {
    return values[static_cast<size_t>(m) * frames + t];
  }
};

struct Rir {
  std::vector<float> taps;  // unit energy
  float t60_seconds = 0.f;
};

struct StftConfig {
  int n_fft = 1024;  // 64 ms at 16 kHz
  int hop = 160;     // 10 ms
};

// Complex STFT, [frames][n_fft/2+1] row-major, center (reflect) padded.
struct ComplexSpectrogram {
  int bins = 0;
  int frames = 0;
  std::vector<std::complex<float>> v;

  std::complex<float>& at(int t, int k) {
    return v[static_cast<size_t>(t) * bins + k];
  }
  std::complex<float> at(int t, int k) const {
    return v[static_cast<size_t>(t) * bins + k];
  }
};

// In-place radix-2 FFT; n must be a power of two.
void fft_inplace(std::vector<std::complex<float>>& x, bool inverse);

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg = {});

// Weighted overlap-add inverse with squared-window normalization;
// reconstructs interior samples of any hop <= n_fft.
Waveform istft(const ComplexSpectrogram& spec, int num_samples,
               const StftConfig& cfg = {}, int sample_rate = kSampleRate);

struct MelConfig {
  int n_mels = 64;
  int n_fft = 1024;
  int hop = 160;
  float fmin_hz = 0.f;
  float fmax_hz = 8000.f;
  float power_floor = kMelPowerFloor;
  int sample_rate = kSampleRate;
};

// Triangular filterbank on the HTK mel scale plus its regularized
// pseudo-inverse (for lifting mel power back to linear spectra).
class MelFilterbank {
 public:
  explicit MelFilterbank(const MelConfig& cfg = {});
  int bands() const { return cfg_.n_mels; }
  int bins() const { return bins_; }
  float weight(int band, int bin) const {
    return weights_[static_cast<size_t>(band) * bins_ + bin];
  }
  float center_hz(int band) const { return centers_hz_[static_cast<size_t>(band)]; }
  // power spectrum bins -> mel power bands
  void apply(const float* power, float* mel_out) const;
  // mel power bands -> nonnegative linear power estimate
  void lift(const float* mel, float* power_out) const;

 private:
  MelConfig cfg_;
  int bins_;
  std::vector<float> weights_;     // [n_mels][bins]
  std::vector<float> lift_;        // [bins][n_mels]
  std::vector<float> centers_hz_;  // [n_mels]
};

MelSpectrogram wav_to_logmel(const Waveform& w, const MelConfig& cfg = {});

// Phase reconstruction from mel features; deterministic given seed.
Waveform griffin_lim(const MelSpectrogram& mel, int iters = 32,
                     uint64_t seed = 0, const MelConfig& cfg = {});

// Per-iteration |STFT(istft(.))| mismatch, exposed for the monotonicity test.
std::vector<float> griffin_lim_objective(const MelSpectrogram& mel, int iters,
                                         uint64_t seed,
                                         const MelConfig& cfg = {});

// Full convolution truncated to len(w), peak renormalized to the input peak.
Waveform convolve_rir(const Waveform& w, const Rir& h);

// speech + g*noise with g chosen for the target SNR; noise is looped or
// truncated to the speech length; result rescaled into [-1,1] if it clips.
Waveform mix_at_snr(const Waveform& speech, const Waveform& noise,
                    float snr_db);

// Exact target length: longer inputs cut from a seeded random offset,
// shorter ones zero-padded at the end.
Waveform chunk_or_pad(const Waveform& w, float target_seconds, uint64_t seed);

}  // namespace ast
