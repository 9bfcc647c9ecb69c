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

#include "ast/dsp.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <unordered_map>

#include "ast/rng.h"

namespace ast {

float Waveform::rms() const {
  if (samples.empty()) return 0.f;
  double s = 0.0;
  for (float x : samples) s += static_cast<double>(x) * x;
  return static_cast<float>(std::sqrt(s / static_cast<double>(samples.size())));
}

float Waveform::peak() const {
  float p = 0.f;
  for (float x : samples) p = std::max(p, std::fabs(x));
  return p;
}

// -------------------------------------------------------------------- FFT

namespace {

const std::vector<std::complex<float>>& twiddles(int n) {
  thread_local std::unordered_map<int, std::vector<std::complex<float>>> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<std::complex<float>> tw(static_cast<size_t>(n) / 2);
  for (int k = 0; k < n / 2; ++k) {
    const double a = -2.0 * M_PI * k / n;
    tw[static_cast<size_t>(k)] = {static_cast<float>(std::cos(a)),
                                  static_cast<float>(std::sin(a))};
  }
  return cache.emplace(n, std::move(tw)).first->second;
}

bool is_pow2(size_t n) { return n && (n & (n - 1)) == 0; }

size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

std::vector<float> hann_window(int n) {
  std::vector<float> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<size_t>(i)] =
        0.5f - 0.5f * std::cos(2.f * static_cast<float>(M_PI) * i / n);
  return w;
}

}  // namespace

void fft_inplace(std::vector<std::complex<float>>& x, bool inverse) {
  const size_t n = x.size();
  require(is_pow2(n), ErrorCategory::kUsage, "fft: size must be a power of two");
  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  const auto& tw = twiddles(static_cast<int>(n));
  for (size_t len = 2; len <= n; len <<= 1) {
    const size_t stride = n / len;
    for (size_t i = 0; i < n; i += len) {
      for (size_t j = 0; j < len / 2; ++j) {
        std::complex<float> w = tw[j * stride];
        if (inverse) w = std::conj(w);
        const auto u = x[i + j];
        const auto v = x[i + j + len / 2] * w;
        x[i + j] = u + v;
        x[i + j + len / 2] = u - v;
      }
    }
  }
  if (inverse) {
    const float inv = 1.f / static_cast<float>(n);
    for (auto& c : x) c *= inv;
  }
}

// ------------------------------------------------------------- STFT/iSTFT

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg) {
  require(!w.samples.empty(), ErrorCategory::kInput, "stft: empty waveform");
  const int n_fft = cfg.n_fft, hop = cfg.hop;
  const int pad = n_fft / 2;
  const int len = static_cast<int>(w.size());
  const int frames = len / hop + 1;

  // center (reflect) padding
  std::vector<float> padded(static_cast<size_t>(len) + 2 * pad);
  for (int i = 0; i < len + 2 * pad; ++i)
    padded[static_cast<size_t>(i)] =
        w.samples[static_cast<size_t>(reflect_index(i - pad, len))];

  const auto window = hann_window(n_fft);
  ComplexSpectrogram out;
  out.bins = n_fft / 2 + 1;
  out.frames = frames;
  out.v.resize(static_cast<size_t>(frames) * out.bins);

  std::vector<std::complex<float>> buf(static_cast<size_t>(n_fft));
  for (int t = 0; t < frames; ++t) {
    const float* src = padded.data() + static_cast<size_t>(t) * hop;
    for (int i = 0; i < n_fft; ++i)
      buf[static_cast<size_t>(i)] = {src[i] * window[static_cast<size_t>(i)], 0.f};
    fft_inplace(buf, false);
    for (int k = 0; k < out.bins; ++k) out.at(t, k) = buf[static_cast<size_t>(k)];
  }
  return out;
}

Waveform istft(const ComplexSpectrogram& spec, int num_samples,
               const StftConfig& cfg, int sample_rate) {
  const int n_fft = cfg.n_fft, hop = cfg.hop;
  require(spec.bins == n_fft / 2 + 1, ErrorCategory::kDimension,
          "istft: bin count does not match n_fft");
  const int pad = n_fft / 2;
  const int total = (spec.frames - 1) * hop + n_fft;
  std::vector<float> acc(static_cast<size_t>(total), 0.f);
  std::vector<float> wsum(static_cast<size_t>(total), 0.f);
  const auto window = hann_window(n_fft);

  std::vector<std::complex<float>> buf(static_cast<size_t>(n_fft));
  for (int t = 0; t < spec.frames; ++t) {
    for (int k = 0; k < spec.bins; ++k) buf[static_cast<size_t>(k)] = spec.at(t, k);
    for (int k = spec.bins; k < n_fft; ++k)
      buf[static_cast<size_t>(k)] = std::conj(spec.at(t, n_fft - k));
    fft_inplace(buf, true);
    float* dst = acc.data() + static_cast<size_t>(t) * hop;
    float* wd = wsum.data() + static_cast<size_t>(t) * hop;
    for (int i = 0; i < n_fft; ++i) {
      dst[i] += buf[static_cast<size_t>(i)].real() * window[static_cast<size_t>(i)];
      wd[i] += window[static_cast<size_t>(i)] * window[static_cast<size_t>(i)];
    }
  }
  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.resize(static_cast<size_t>(num_samples), 0.f);
  for (int i = 0; i < num_samples; ++i) {
    const int j = i + pad;
    if (j < total)
      out.samples[static_cast<size_t>(i)] =
          acc[static_cast<size_t>(j)] / std::max(wsum[static_cast<size_t>(j)], 1e-8f);
  }
  return out;
}

// ---------------------------------------------------------- mel filterbank

namespace {
float hz_to_mel(float hz) { return 2595.f * std::log10(1.f + hz / 700.f); }
float mel_to_hz(float mel) {
  return 700.f * (std::pow(10.f, mel / 2595.f) - 1.f);
}
}  // namespace

MelFilterbank::MelFilterbank(const MelConfig& cfg)
    : cfg_(cfg), bins_(cfg.n_fft / 2 + 1) {
  const int m = cfg.n_mels;
  weights_.assign(static_cast<size_t>(m) * bins_, 0.f);
  centers_hz_.resize(static_cast<size_t>(m));

  const float mel_lo = hz_to_mel(cfg.fmin_hz), mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<float> edges_hz(static_cast<size_t>(m) + 2);
  for (int i = 0; i < m + 2; ++i)
    edges_hz[static_cast<size_t>(i)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / static_cast<float>(m + 1));
  for (int b = 0; b < m; ++b) centers_hz_[static_cast<size_t>(b)] = edges_hz[static_cast<size_t>(b) + 1];

  const float bin_hz =
      static_cast<float>(cfg.sample_rate) / static_cast<float>(cfg.n_fft);
  for (int b = 0; b < m; ++b) {
    const float lo = edges_hz[static_cast<size_t>(b)];
    const float mid = edges_hz[static_cast<size_t>(b) + 1];
    const float hi = edges_hz[static_cast<size_t>(b) + 2];
    for (int k = 0; k < bins_; ++k) {
      const float f = bin_hz * static_cast<float>(k);
      float w = 0.f;
      if (f > lo && f < hi)
        w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      weights_[static_cast<size_t>(b) * bins_ + k] = w;
    }
  }

  // Regularized pseudo-inverse: lift = Wt (W Wt + eps I)^-1.
  using Mat = Eigen::MatrixXd;
  Mat W(m, bins_);
  for (int b = 0; b < m; ++b)
    for (int k = 0; k < bins_; ++k)
      W(b, k) = weights_[static_cast<size_t>(b) * bins_ + k];
  Mat gram = W * W.transpose();
  gram.diagonal().array() += 1e-8 * gram.trace() / m + 1e-12;
  Mat lift = W.transpose() * gram.llt().solve(Mat::Identity(m, m));
  lift_.resize(static_cast<size_t>(bins_) * m);
  for (int k = 0; k < bins_; ++k)
    for (int b = 0; b < m; ++b)
      lift_[static_cast<size_t>(k) * m + b] = static_cast<float>(lift(k, b));
}

void MelFilterbank::apply(const float* power, float* mel_out) const {
  for (int b = 0; b < cfg_.n_mels; ++b) {
    const float* wrow = weights_.data() + static_cast<size_t>(b) * bins_;
    float s = 0.f;
    for (int k = 0; k < bins_; ++k) s += wrow[k] * power[k];
    mel_out[b] = s;
  }
}

void MelFilterbank::lift(const float* mel, float* power_out) const {
  for (int k = 0; k < bins_; ++k) {
    const float* lrow = lift_.data() + static_cast<size_t>(k) * cfg_.n_mels;
    float s = 0.f;
    for (int b = 0; b < cfg_.n_mels; ++b) s += lrow[b] * mel[b];
    power_out[k] = std::max(s, 0.f);
  }
}

MelSpectrogram wav_to_logmel(const Waveform& w, const MelConfig& cfg) {
  StftConfig scfg{cfg.n_fft, cfg.hop};
  const auto spec = stft(w, scfg);
  static thread_local struct {
    MelConfig cfg;
    std::unique_ptr<MelFilterbank> fb;
  } cache;
  if (!cache.fb || cache.cfg.n_mels != cfg.n_mels ||
      cache.cfg.n_fft != cfg.n_fft || cache.cfg.sample_rate != cfg.sample_rate ||
      cache.cfg.fmax_hz != cfg.fmax_hz || cache.cfg.fmin_hz != cfg.fmin_hz) {
    cache.fb = std::make_unique<MelFilterbank>(cfg);
    cache.cfg = cfg;
  }
  const MelFilterbank& fb = *cache.fb;

  MelSpectrogram mel;
  mel.n_mels = cfg.n_mels;
  mel.frames = spec.frames - (spec.frames % 4);  // VAE downsamples by 4
  require(mel.frames >= 4, ErrorCategory::kInput,
          "wav_to_logmel: waveform too short");
  mel.power_floor = cfg.power_floor;
  mel.hop_seconds = static_cast<float>(cfg.hop) / cfg.sample_rate;
  mel.frame_seconds = static_cast<float>(cfg.n_fft) / cfg.sample_rate;
  mel.values.resize(static_cast<size_t>(mel.n_mels) * mel.frames);

  std::vector<float> power(static_cast<size_t>(spec.bins));
  std::vector<float> bands(static_cast<size_t>(cfg.n_mels));
  for (int t = 0; t < mel.frames; ++t) {
    for (int k = 0; k < spec.bins; ++k) power[static_cast<size_t>(k)] = std::norm(spec.at(t, k));
    fb.apply(power.data(), bands.data());
    for (int b = 0; b < cfg.n_mels; ++b)
      mel.at(b, t) = std::log(std::max(bands[static_cast<size_t>(b)], cfg.power_floor));
  }
  return mel;
}

// ------------------------------------------------------------- Griffin-Lim

namespace {

struct GlResult {
  Waveform wav;
  std::vector<float> objective;
};

GlResult griffin_lim_impl(const MelSpectrogram& mel, int iters, uint64_t seed,
                          const MelConfig& cfg) {
  require(mel.n_mels == cfg.n_mels, ErrorCategory::kDimension,
          "griffin_lim: band count mismatch");
  MelFilterbank fb(cfg);
  const int bins = fb.bins();
  const int frames = mel.frames;
  const int num_samples = (frames - 1) * cfg.hop;

  // target magnitudes from lifted mel power
  std::vector<float> mag(static_cast<size_t>(frames) * bins);
  std::vector<float> mel_power(static_cast<size_t>(cfg.n_mels));
  std::vector<float> power(static_cast<size_t>(bins));
  double mag_norm_sq = 0.0;
  for (int t = 0; t < frames; ++t) {
    for (int b = 0; b < cfg.n_mels; ++b)
      mel_power[static_cast<size_t>(b)] = std::exp(mel.at(b, t));
    fb.lift(mel_power.data(), power.data());
    for (int k = 0; k < bins; ++k) {
      const float m = std::sqrt(power[static_cast<size_t>(k)]);
      mag[static_cast<size_t>(t) * bins + k] = m;
      mag_norm_sq += static_cast<double>(m) * m;
    }
  }

  StftConfig scfg{cfg.n_fft, cfg.hop};
  ComplexSpectrogram spec;
  spec.bins = bins;
  spec.frames = frames;
  spec.v.resize(mag.size());
  Rng rng(seed);
  for (size_t i = 0; i < mag.size(); ++i) {
    const float phase = rng.uniform(0.f, 2.f * static_cast<float>(M_PI));
    spec.v[i] = std::polar(mag[i], phase);
  }

  GlResult res;
  Waveform wav;
  for (int it = 0; it < iters; ++it) {
    wav = istft(spec, num_samples, scfg, cfg.sample_rate);
    const auto re = stft(wav, scfg);
    double err = 0.0;
    for (size_t i = 0; i < mag.size(); ++i) {
      const float d = std::abs(re.v[i]) - mag[i];
      err += static_cast<double>(d) * d;
    }
    res.objective.push_back(
        static_cast<float>(std::sqrt(err / std::max(mag_norm_sq, 1e-30))));
    for (size_t i = 0; i < mag.size(); ++i) {
      const float a = std::abs(re.v[i]);
      spec.v[i] = a > 1e-12f ? re.v[i] * (mag[i] / a)
                             : std::complex<float>(mag[i], 0.f);
    }
  }
  res.wav = istft(spec, num_samples, scfg, cfg.sample_rate);
  // keep synthesis inside [-1, 1]
  const float pk = res.wav.peak();
  if (pk > 1.f)
    for (auto& s : res.wav.samples) s /= pk;
  return res;
}

}  // namespace

Waveform griffin_lim(const MelSpectrogram& mel, int iters, uint64_t seed,
                     const MelConfig& cfg) {
  return griffin_lim_impl(mel, iters, seed, cfg).wav;
}

std::vector<float> griffin_lim_objective(const MelSpectrogram& mel, int iters,
                                         uint64_t seed, const MelConfig& cfg) {
  return griffin_lim_impl(mel, iters, seed, cfg).objective;
}

// --------------------------------------------------------- RIR convolution

Waveform convolve_rir(const Waveform& w, const Rir& h) {
  require(!h.taps.empty(), ErrorCategory::kInput, "convolve_rir: empty RIR");
  require(!w.samples.empty(), ErrorCategory::kInput,
          "convolve_rir: empty waveform");
  const size_t n = w.samples.size(), k = h.taps.size();
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(n, 0.f);

  if (k <= 64) {
    // short kernels: direct form (exact for the delta/delay cases)
    for (size_t i = 0; i < n; ++i) {
      float s = 0.f;
      const size_t kmax = std::min(k, i + 1);
      for (size_t j = 0; j < kmax; ++j) s += w.samples[i - j] * h.taps[j];
      out.samples[i] = s;
    }
  } else {
    const size_t m = next_pow2(n + k - 1);
    std::vector<std::complex<float>> a(m), b(m);
    for (size_t i = 0; i < n; ++i) a[i] = w.samples[i];
    for (size_t i = 0; i < k; ++i) b[i] = h.taps[i];
    fft_inplace(a, false);
    fft_inplace(b, false);
    for (size_t i = 0; i < m; ++i) a[i] *= b[i];
    fft_inplace(a, true);
    for (size_t i = 0; i < n; ++i) out.samples[i] = a[i].real();
  }

  const float in_peak = w.peak(), out_peak = out.peak();
  if (out_peak > 1e-12f && in_peak > 0.f) {
    const float g = in_peak / out_peak;
    if (g != 1.f)
      for (auto& s : out.samples) s *= g;
  }
  return out;
}

Waveform mix_at_snr(const Waveform& speech, const Waveform& noise,
                    float snr_db) {
  require(speech.rms() > 1e-8f, ErrorCategory::kInput,
          "mix_at_snr: silent speech (SNR undefined)");
  require(noise.rms() > 1e-8f, ErrorCategory::kInput,
          "mix_at_snr: silent noise (SNR undefined)");
  const size_t n = speech.samples.size();
  // loop or truncate noise to the speech length
  std::vector<float> looped(n);
  for (size_t i = 0; i < n; ++i) looped[i] = noise.samples[i % noise.samples.size()];
  double e = 0.0;
  for (float x : looped) e += static_cast<double>(x) * x;
  const float noise_rms =
      static_cast<float>(std::sqrt(e / static_cast<double>(n)));
  require(noise_rms > 1e-8f, ErrorCategory::kInput,
          "mix_at_snr: looped noise is silent");

  const float g =
      speech.rms() / noise_rms * std::pow(10.f, -snr_db / 20.f);
  Waveform out;
  out.sample_rate = speech.sample_rate;
  out.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    out.samples[i] = speech.samples[i] + g * looped[i];
  const float pk = out.peak();
  if (pk > 1.f)
    for (auto& s : out.samples) s /= pk;
  return out;
}

Waveform chunk_or_pad(const Waveform& w, float target_seconds, uint64_t seed) {
  require(target_seconds > 0.f, ErrorCategory::kInput,
          "chunk_or_pad: target_seconds must be positive");
  const int64_t target = std::llround(
      static_cast<double>(target_seconds) * w.sample_rate);
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(static_cast<size_t>(target), 0.f);
  const int64_t n = w.size();
  if (n >= target) {
    Rng rng(seed);
    const int64_t offset = n == target ? 0 : rng.randint(n - target + 1);
    std::copy_n(w.samples.begin() + offset, target, out.samples.begin());
  } else {
    std::copy(w.samples.begin(), w.samples.end(), out.samples.begin());
  }
  return out;
}

}  // namespace ast
