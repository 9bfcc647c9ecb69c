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

#include "ast/scene_sim.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ast/wav_io.h"

namespace ast {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(Gender g) {
  return g == Gender::kMale ? "male" : "female";
}

SpeakerSpec SpeakerSpec::from_id(int id) {
  require(id >= 0, ErrorCategory::kInput, "speaker id must be nonnegative");
  SpeakerSpec s;
  s.speaker_id = id;
  s.gender = (id % 2 == 0) ? Gender::kMale : Gender::kFemale;
  const int g = (id / 2) % 4;
  s.f0_hz = s.gender == Gender::kMale
                ? 100.f + 40.f * static_cast<float>(g) / 3.f
                : 180.f + 60.f * static_cast<float>(g) / 3.f;
  s.formant_shift = 0.9f + 0.2f * static_cast<float>((id * 5) % 8) / 7.f;
  return s;
}

namespace {
// 10 fixed note patterns, (f0 multiplier, duration fraction); fractions sum
// to 1 per row. Chosen to be far apart so the content probe has margin.
constexpr float kPatterns[10][4][2] = {
    {{1.00f, 0.30f}, {1.26f, 0.25f}, {0.84f, 0.25f}, {1.50f, 0.20f}},
    {{0.89f, 0.25f}, {1.12f, 0.25f}, {1.41f, 0.30f}, {0.75f, 0.20f}},
    {{1.19f, 0.20f}, {0.94f, 0.30f}, {1.50f, 0.25f}, {1.19f, 0.25f}},
    {{1.33f, 0.25f}, {1.00f, 0.20f}, {0.79f, 0.30f}, {1.26f, 0.25f}},
    {{0.75f, 0.30f}, {1.50f, 0.20f}, {1.00f, 0.25f}, {1.33f, 0.25f}},
    {{1.41f, 0.25f}, {0.89f, 0.25f}, {1.26f, 0.20f}, {0.94f, 0.30f}},
    {{1.06f, 0.20f}, {1.68f, 0.25f}, {0.84f, 0.30f}, {1.12f, 0.25f}},
    {{0.94f, 0.25f}, {1.26f, 0.30f}, {1.59f, 0.20f}, {0.89f, 0.25f}},
    {{1.50f, 0.25f}, {0.75f, 0.25f}, {1.19f, 0.25f}, {1.41f, 0.25f}},
    {{0.79f, 0.30f}, {1.06f, 0.20f}, {1.33f, 0.25f}, {1.59f, 0.25f}},
};
}  // namespace

ContentSpec ContentSpec::from_id(int id) {
  require(id >= 0, ErrorCategory::kInput, "content id must be nonnegative");
  ContentSpec c;
  c.content_id = id;
  const auto& row = kPatterns[id % 10];
  for (int i = 0; i < 4; ++i) c.pattern.push_back({row[i][0], row[i][1]});
  return c;
}

const char* to_string(BackgroundKind k) {
  switch (k) {
    case BackgroundKind::kNone: return "none";
    case BackgroundKind::kWhite: return "white";
    case BackgroundKind::kPink: return "pink";
    case BackgroundKind::kChirpTrain: return "chirp_train";
    case BackgroundKind::kAmTone: return "am_tone";
    case BackgroundKind::kBabble: return "babble";
  }
  return "none";
}

std::optional<BackgroundKind> background_from_string(const std::string& s) {
  for (auto k : {BackgroundKind::kNone, BackgroundKind::kWhite,
                 BackgroundKind::kPink, BackgroundKind::kChirpTrain,
                 BackgroundKind::kAmTone, BackgroundKind::kBabble})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

// ------------------------------------------------------------- synthesis

namespace {

struct Resonator {
  float a1 = 0.f, a2 = 0.f, g = 1.f;
  float y1 = 0.f, y2 = 0.f;

  void tune(float freq_hz, float bw_hz, int sr) {
    const float r = std::exp(-static_cast<float>(M_PI) * bw_hz / sr);
    a1 = 2.f * r * std::cos(2.f * static_cast<float>(M_PI) * freq_hz / sr);
    a2 = -r * r;
    g = 1.f - r;
  }
  float step(float x) {
    const float y = g * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

// Vowel-like formant pairs cycled per segment.
constexpr float kFormant1[4] = {350.f, 500.f, 650.f, 800.f};
constexpr float kFormant2[4] = {1100.f, 1500.f, 1900.f, 2300.f};

void normalize_peak(std::vector<float>& x, float target) {
  float pk = 0.f;
  for (float v : x) pk = std::max(pk, std::fabs(v));
  if (pk > 1e-12f) {
    const float g = target / pk;
    for (auto& v : x) v *= g;
  }
}

void normalize_rms(std::vector<float>& x, float target) {
  double e = 0;
  for (float v : x) e += static_cast<double>(v) * v;
  const float rms = static_cast<float>(std::sqrt(e / x.size()));
  if (rms > 1e-12f) {
    const float g = target / rms;
    for (auto& v : x) v *= g;
  }
}

}  // namespace

Waveform synth_speech(const SpeakerSpec& speaker, const ContentSpec& content,
                      float seconds, uint64_t seed) {
  require(seconds > 0.f, ErrorCategory::kInput, "synth_speech: seconds <= 0");
  const int sr = kSampleRate;
  const int n = static_cast<int>(std::lround(seconds * sr));
  Rng rng(seed);
  const float f0_jitter = 1.f + 0.006f * rng.uniform(-1.f, 1.f);
  const float vib_phase = rng.uniform(0.f, 2.f * static_cast<float>(M_PI));

  // segment boundaries in samples
  std::vector<int> bounds = {0};
  float acc = 0.f;
  for (const auto& seg : content.pattern) {
    acc += seg.dur_frac;
    bounds.push_back(static_cast<int>(std::lround(acc * n)));
  }
  bounds.back() = n;

  std::vector<float> x(static_cast<size_t>(n));
  double phase = 0.0;
  Resonator r1, r2;
  for (size_t s = 0; s < content.pattern.size(); ++s) {
    const float f0 = speaker.f0_hz * f0_jitter * content.pattern[s].f0_mult;
    const float seg_amp =
        0.7f + 0.3f * static_cast<float>((content.content_id + 3 * static_cast<int>(s)) % 4) / 3.f;
    // segment vowel; filter state carries across the boundary
    const int vowel = (content.content_id * 3 + static_cast<int>(s) * 5) % 4;
    r1.tune(kFormant1[vowel] * speaker.formant_shift, 90.f, sr);
    r2.tune(kFormant2[vowel] * speaker.formant_shift, 140.f, sr);
    for (int i = bounds[s]; i < bounds[s + 1]; ++i) {
      const float t = static_cast<float>(i) / sr;
      const float vib = 1.f + 0.004f * std::sin(2.f * static_cast<float>(M_PI) * 5.f * t + vib_phase);
      phase += static_cast<double>(f0 * vib) / sr;
      const float saw = 2.f * static_cast<float>(phase - std::floor(phase)) - 1.f;
      x[static_cast<size_t>(i)] = r2.step(r1.step(seg_amp * saw));
    }
  }
  normalize_peak(x, 0.7f);
  // faint breath noise so distinct seeds give distinct waveforms
  for (auto& v : x) v += 5e-4f * rng.normal();
  // 10 ms edge ramps
  const int ramp = sr / 100;
  for (int i = 0; i < ramp && i < n; ++i) {
    const float g = static_cast<float>(i) / ramp;
    x[static_cast<size_t>(i)] *= g;
    x[static_cast<size_t>(n - 1 - i)] *= g;
  }
  Waveform w;
  w.sample_rate = sr;
  w.samples = std::move(x);
  return w;
}

Waveform synth_background(BackgroundKind kind, float seconds, uint64_t seed) {
  require(kind != BackgroundKind::kNone, ErrorCategory::kUsage,
          "synth_background: kind must not be none");
  require(seconds > 0.f, ErrorCategory::kInput, "synth_background: seconds <= 0");
  const int sr = kSampleRate;
  const int n = static_cast<int>(std::lround(seconds * sr));
  Rng rng(seed);
  std::vector<float> x(static_cast<size_t>(n), 0.f);

  switch (kind) {
    case BackgroundKind::kWhite: {
      for (auto& v : x) v = rng.normal();
      break;
    }
    case BackgroundKind::kPink: {
      size_t m = 1;
      while (m < x.size()) m <<= 1;
      std::vector<std::complex<float>> spec(m);
      for (auto& c : spec) c = {rng.normal(), 0.f};
      fft_inplace(spec, false);
      for (size_t k = 1; k < m / 2; ++k) {
        const float g = 1.f / std::sqrt(static_cast<float>(k));
        spec[k] *= g;
        spec[m - k] = std::conj(spec[k]);
      }
      spec[0] = 0.f;
      spec[m / 2] *= 1.f / std::sqrt(static_cast<float>(m) / 2);
      fft_inplace(spec, true);
      for (int i = 0; i < n; ++i) x[static_cast<size_t>(i)] = spec[static_cast<size_t>(i)].real();
      break;
    }
    case BackgroundKind::kChirpTrain: {
      const float sweep_s = 0.25f;
      const int sweep_n = static_cast<int>(sweep_s * sr);
      const float f_lo = 300.f * (1.f + 0.1f * rng.uniform(-1.f, 1.f));
      const float f_hi = 3000.f;
      for (int i = 0; i < n; ++i) {
        const int j = i % sweep_n;
        const float tt = static_cast<float>(j) / sr;
        const float ph = 2.f * static_cast<float>(M_PI) *
                         (f_lo * tt + (f_hi - f_lo) * tt * tt / (2.f * sweep_s));
        const float env =
            0.5f - 0.5f * std::cos(2.f * static_cast<float>(M_PI) * j / sweep_n);
        x[static_cast<size_t>(i)] = env * std::sin(ph);
      }
      break;
    }
    case BackgroundKind::kAmTone: {
      const float fc = 800.f * (1.f + 0.05f * rng.uniform(-1.f, 1.f));
      const float ph0 = rng.uniform(0.f, 2.f * static_cast<float>(M_PI));
      for (int i = 0; i < n; ++i) {
        const float t = static_cast<float>(i) / sr;
        const float env =
            (1.f + 0.9f * std::sin(2.f * static_cast<float>(M_PI) * 4.f * t)) / 1.9f;
        x[static_cast<size_t>(i)] =
            env * std::sin(2.f * static_cast<float>(M_PI) * fc * t + ph0);
      }
      break;
    }
    case BackgroundKind::kBabble: {
      for (int voice = 0; voice < 6; ++voice) {
        SpeakerSpec sp = SpeakerSpec::from_id(static_cast<int>(rng.randint(8)));
        sp.f0_hz *= 1.f + 0.08f * rng.uniform(-1.f, 1.f);
        ContentSpec ct = ContentSpec::from_id(static_cast<int>(rng.randint(10)));
        auto v = synth_speech(sp, ct, seconds, rng.next_u64());
        for (int i = 0; i < n; ++i) x[static_cast<size_t>(i)] += v.samples[static_cast<size_t>(i)];
      }
      break;
    }
    case BackgroundKind::kNone:
      break;
  }
  normalize_rms(x, 1.f);
  Waveform w;
  w.sample_rate = sr;
  w.samples = std::move(x);
  return w;
}

Rir synth_rir(float t60_seconds, uint64_t seed) {
  require(t60_seconds >= 0.f, ErrorCategory::kInput, "synth_rir: negative t60");
  Rir h;
  h.t60_seconds = t60_seconds;
  if (t60_seconds == 0.f) {
    h.taps = {1.f};
    return h;
  }
  const int sr = kSampleRate;
  const int n = static_cast<int>(std::lround(1.2f * t60_seconds * sr));
  Rng rng(seed);
  h.taps.resize(static_cast<size_t>(n));
  // direct path, then exponentially decaying noise (60 dB down at t60)
  h.taps[0] = 1.f;
  const float decay = 3.f * std::log(10.f) / (t60_seconds * sr);
  for (int i = 1; i < n; ++i)
    h.taps[static_cast<size_t>(i)] = rng.normal() * std::exp(-decay * static_cast<float>(i));
  double e = 0;
  for (float t : h.taps) e += static_cast<double>(t) * t;
  const float g = 1.f / static_cast<float>(std::sqrt(e));
  for (auto& t : h.taps) t *= g;
  return h;
}

Waveform compose_scene(const Waveform& speech, const SceneSpec& scene,
                       uint64_t seed) {
  if (scene.clean()) return speech;
  Waveform w = speech;
  if (scene.t60_seconds > 0.f)
    w = convolve_rir(w, synth_rir(scene.t60_seconds, mix_seed(seed, 1)));
  if (scene.kind != BackgroundKind::kNone) {
    auto bg = synth_background(scene.kind, speech.duration_seconds(),
                               mix_seed(seed, 2));
    w = mix_at_snr(w, bg, scene.snr_db);
  }
  return w;
}

// --------------------------------------------------------------- captions

int t60_bucket(float t60_seconds) {
  int best = 0;
  float best_d = std::fabs(t60_seconds - kT60Levels[0]);
  for (int i = 1; i < 4; ++i) {
    const float d = std::fabs(t60_seconds - kT60Levels[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

namespace {

// kind -> room family (plain / tech / outdoor / social)
int kind_group(BackgroundKind k) {
  switch (k) {
    case BackgroundKind::kNone: return 0;
    case BackgroundKind::kWhite:
    case BackgroundKind::kAmTone: return 1;
    case BackgroundKind::kPink:
    case BackgroundKind::kChirpTrain: return 2;
    case BackgroundKind::kBabble: return 3;
  }
  return 0;
}

constexpr const char* kPlaceTable[4][4] = {
    // plain, tech, outdoor, social
    {"a quiet room", "a studio", "an open field", "a cafe"},      // t60 = 0
    {"a small room", "an office", "a courtyard", "a classroom"},  // 0.15
    {"a large room", "a workshop", "a tunnel", "a hall"},         // 0.3
    {"a stairwell", "a warehouse", "a cavern", "a church"},       // 0.6
};

const char* sound_word(BackgroundKind k) {
  switch (k) {
    case BackgroundKind::kNone: return "soft echoes";
    case BackgroundKind::kWhite: return "static hiss";
    case BackgroundKind::kPink: return "rushing wind";
    case BackgroundKind::kChirpTrain: return "bird chirps";
    case BackgroundKind::kAmTone: return "a beeping alarm";
    case BackgroundKind::kBabble: return "crowd murmur";
  }
  return "";
}

}  // namespace

std::pair<std::string, std::string> scene_words(const SceneSpec& scene) {
  if (scene.clean()) return {"a quiet room", ""};
  return {kPlaceTable[t60_bucket(scene.t60_seconds)][kind_group(scene.kind)],
          sound_word(scene.kind)};
}

std::string render_caption(const SceneSpec& scene, Gender gender) {
  const auto [place, sound] = scene_words(scene);
  std::ostringstream os;
  os << "A " << to_string(gender) << " speaks in " << place;
  if (!scene.clean()) os << " with " << sound << " behind";
  return os.str();
}

const std::vector<std::string>& caption_vocabulary() {
  static const std::vector<std::string> vocab = [] {
    std::set<std::string> words;
    auto add_phrase = [&words](const std::string& phrase) {
      std::istringstream is(phrase);
      std::string w;
      while (is >> w) words.insert(w);
    };
    add_phrase("a male speaks in with behind female");
    for (const auto& row : kPlaceTable)
      for (const char* place : row) add_phrase(place);
    for (auto k : {BackgroundKind::kNone, BackgroundKind::kWhite,
                   BackgroundKind::kPink, BackgroundKind::kChirpTrain,
                   BackgroundKind::kAmTone, BackgroundKind::kBabble})
      add_phrase(sound_word(k));
    return std::vector<std::string>(words.begin(), words.end());
  }();
  return vocab;
}

// ------------------------------------------------------------------ pairs

PromptPair make_training_triplet(const SpeakerSpec& speaker,
                                 const ContentSpec& content_spec,
                                 const SceneSpec& ref_scene,
                                 const SceneSpec& content_scene, float seconds,
                                 uint64_t seed) {
  PromptPair p;
  p.speaker = speaker;
  p.content_spec = content_spec;
  p.ref_scene = ref_scene;
  p.content_scene = content_scene;
  auto speech = synth_speech(speaker, content_spec, seconds, mix_seed(seed, 10));
  p.reference = compose_scene(speech, ref_scene, mix_seed(seed, 11));
  p.content = compose_scene(speech, content_scene, mix_seed(seed, 12));
  p.target = p.reference;  // the simulated reference doubles as the target
  p.caption = render_caption(ref_scene, speaker.gender);
  return p;
}

PromptPair make_eval_pair(const SpeakerSpec& content_speaker,
                          const ContentSpec& content_spec,
                          const SpeakerSpec& ref_speaker,
                          const ContentSpec& ref_content,
                          const SceneSpec& ref_scene,
                          const SceneSpec& content_scene, float seconds,
                          uint64_t seed) {
  PromptPair p;
  p.speaker = content_speaker;
  p.content_spec = content_spec;
  p.ref_scene = ref_scene;
  p.content_scene = content_scene;
  auto content_speech =
      synth_speech(content_speaker, content_spec, seconds, mix_seed(seed, 20));
  p.content = compose_scene(content_speech, content_scene, mix_seed(seed, 21));
  auto ref_speech =
      synth_speech(ref_speaker, ref_content, seconds, mix_seed(seed, 22));
  p.reference = compose_scene(ref_speech, ref_scene, mix_seed(seed, 23));
  p.target = p.reference;
  p.caption = render_caption(ref_scene, ref_speaker.gender);
  return p;
}

Waveform regen_clean_speech_train(const ManifestRow& row, float seconds) {
  return synth_speech(SpeakerSpec::from_id(row.speaker_id),
                      ContentSpec::from_id(row.content_id), seconds,
                      mix_seed(row.seed, 10));
}

Waveform regen_clean_speech_eval(const ManifestRow& row, float seconds) {
  return synth_speech(SpeakerSpec::from_id(row.speaker_id),
                      ContentSpec::from_id(row.content_id), seconds,
                      mix_seed(row.seed, 20));
}

// ---------------------------------------------------------------- dataset

const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::kCleanToClean: return "Clean->Clean";
    case Scenario::kCleanToEnv: return "Clean->Env";
    case Scenario::kEnvToClean: return "Env->Clean";
    case Scenario::kEnvToEnv: return "Env->Env";
  }
  return "Clean->Clean";
}

std::optional<Scenario> scenario_from_string(const std::string& s) {
  for (auto sc : {Scenario::kCleanToClean, Scenario::kCleanToEnv,
                  Scenario::kEnvToClean, Scenario::kEnvToEnv})
    if (s == to_string(sc)) return sc;
  return std::nullopt;
}

Scenario scenario_of(const SceneSpec& content_scene, const SceneSpec& ref_scene) {
  const bool cc = content_scene.clean(), rc = ref_scene.clean();
  if (cc && rc) return Scenario::kCleanToClean;
  if (cc) return Scenario::kCleanToEnv;
  if (rc) return Scenario::kEnvToClean;
  return Scenario::kEnvToEnv;
}

namespace {

SceneSpec draw_env_scene(Rng& rng) {
  SceneSpec s;
  do {
    s.kind = static_cast<BackgroundKind>(1 + rng.randint(5));
    s.t60_seconds = kT60Levels[rng.randint(4)];
    // occasional reverb-only scene
    if (rng.uniform() < 0.2) s.kind = BackgroundKind::kNone;
  } while (s.clean());
  s.snr_db = s.kind == BackgroundKind::kNone ? 0.f : rng.uniform(4.f, 20.f);
  return s;
}

json row_to_json(const ManifestRow& r) {
  json j;
  j["ref_path"] = r.ref_path;
  j["content_path"] = r.content_path;
  j["target_path"] = r.target_path;
  j["caption"] = r.caption;
  j["scenario"] = to_string(r.scenario);
  j["speaker_id"] = r.speaker_id;
  j["content_id"] = r.content_id;
  j["gender"] = to_string(r.gender);
  j["snr_db"] = r.snr_db;
  j["t60"] = r.t60;
  j["background_kind"] = to_string(r.background_kind);
  j["seed"] = r.seed;
  return j;
}

ManifestRow row_from_json(const json& j) {
  ManifestRow r;
  r.ref_path = j.at("ref_path").get<std::string>();
  r.content_path = j.at("content_path").get<std::string>();
  r.target_path = j.at("target_path").get<std::string>();
  r.caption = j.at("caption").get<std::string>();
  auto sc = scenario_from_string(j.at("scenario").get<std::string>());
  require(sc.has_value(), ErrorCategory::kInput, "manifest: bad scenario");
  r.scenario = *sc;
  r.speaker_id = j.at("speaker_id").get<int>();
  r.content_id = j.at("content_id").get<int>();
  r.gender = j.at("gender").get<std::string>() == "female" ? Gender::kFemale
                                                           : Gender::kMale;
  r.snr_db = j.at("snr_db").get<float>();
  r.t60 = j.at("t60").get<float>();
  auto bk = background_from_string(j.at("background_kind").get<std::string>());
  require(bk.has_value(), ErrorCategory::kInput, "manifest: bad background");
  r.background_kind = *bk;
  r.seed = j.at("seed").get<uint64_t>();
  return r;
}

struct SplitSpec {
  const char* name;
  int per_cell;
  bool eval_style;       // reference is a different, gender-aligned utterance
  bool gender_mismatch;  // diagnostic: reference gender deliberately differs
};

std::vector<ManifestRow> build_split(const DatasetConfig& cfg,
                                     const SplitSpec& split,
                                     uint64_t split_index) {
  const fs::path split_dir = fs::path(cfg.out_dir) / split.name;
  const fs::path wav_dir = split_dir / "wav";
  std::error_code ec;
  fs::create_directories(wav_dir, ec);
  require(!ec, ErrorCategory::kIo,
          "cannot create dataset dir " + wav_dir.string());

  const Scenario cells[4] = {Scenario::kCleanToClean, Scenario::kCleanToEnv,
                             Scenario::kEnvToClean, Scenario::kEnvToEnv};
  std::vector<ManifestRow> rows;
  int index = 0;
  for (Scenario cell : cells) {
    for (int i = 0; i < split.per_cell; ++i, ++index) {
      const uint64_t item_seed =
          mix_seed(cfg.seed, (split_index << 24) + static_cast<uint64_t>(index));
      Rng rng(item_seed);

      const bool content_env = cell == Scenario::kEnvToClean ||
                               cell == Scenario::kEnvToEnv;
      const bool ref_env =
          cell == Scenario::kCleanToEnv || cell == Scenario::kEnvToEnv;
      SceneSpec content_scene =
          content_env ? draw_env_scene(rng) : SceneSpec{};
      SceneSpec ref_scene = ref_env ? draw_env_scene(rng) : SceneSpec{};

      const int speaker_id = static_cast<int>(rng.randint(cfg.speakers));
      const int content_id = static_cast<int>(rng.randint(cfg.contents));
      const auto speaker = SpeakerSpec::from_id(speaker_id);
      const auto content_spec = ContentSpec::from_id(content_id);

      PromptPair pair;
      if (!split.eval_style) {
        pair = make_training_triplet(speaker, content_spec, ref_scene,
                                     content_scene, cfg.clip_seconds, item_seed);
      } else {
        // reference speaker: different speaker, aligned (or, for the
        // diagnostic split, deliberately mismatched) gender
        int ref_id;
        do {
          ref_id = static_cast<int>(rng.randint(cfg.speakers));
          const bool same_gender =
              SpeakerSpec::from_id(ref_id).gender == speaker.gender;
          if (split.gender_mismatch ? !same_gender : (same_gender && ref_id != speaker_id))
            break;
        } while (true);
        const auto ref_speaker = SpeakerSpec::from_id(ref_id);
        const auto ref_content = ContentSpec::from_id(
            static_cast<int>(rng.randint(cfg.contents)));
        pair = make_eval_pair(speaker, content_spec, ref_speaker, ref_content,
                              ref_scene, content_scene, cfg.clip_seconds,
                              item_seed);
      }

      char stem[32];
      std::snprintf(stem, sizeof(stem), "%05d", index);
      ManifestRow row;
      row.ref_path = std::string("wav/") + stem + "_ref.wav";
      row.content_path = std::string("wav/") + stem + "_content.wav";
      row.target_path = std::string("wav/") + stem + "_target.wav";
      row.caption = pair.caption;
      row.scenario = cell;
      row.speaker_id = speaker_id;
      row.content_id = content_id;
      row.gender = speaker.gender;
      row.snr_db = ref_scene.snr_db;
      row.t60 = ref_scene.t60_seconds;
      row.background_kind = ref_scene.kind;
      row.seed = item_seed;
      write_wav((split_dir / row.ref_path).string(), pair.reference);
      write_wav((split_dir / row.content_path).string(), pair.content);
      write_wav((split_dir / row.target_path).string(), pair.target);
      rows.push_back(row);
    }
  }

  std::ofstream mf(split_dir / "manifest.jsonl");
  require(mf.good(), ErrorCategory::kIo,
          "cannot write manifest in " + split_dir.string());
  for (const auto& r : rows) mf << row_to_json(r).dump() << "\n";
  return rows;
}

}  // namespace

DatasetSummary build_dataset(const DatasetConfig& cfg) {
  require(cfg.train_per_cell >= 0 && cfg.eval_per_cell >= 0,
          ErrorCategory::kConfig, "dataset counts must be nonnegative");
  DatasetSummary out;
  out.train = build_split(cfg, {"train", cfg.train_per_cell, false, false}, 0);
  out.eval = build_split(cfg, {"eval", cfg.eval_per_cell, true, false}, 1);
  if (cfg.eval_mismatched_per_cell > 0)
    out.eval_mismatched = build_split(
        cfg, {"eval_mismatched", cfg.eval_mismatched_per_cell, true, true}, 2);
  return out;
}

std::vector<ManifestRow> load_manifest(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), ErrorCategory::kIo, "cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestRow> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto r = row_from_json(json::parse(line));
    r.ref_path = (base / r.ref_path).string();
    r.content_path = (base / r.content_path).string();
    r.target_path = (base / r.target_path).string();
    rows.push_back(r);
  }
  require(!rows.empty(), ErrorCategory::kInput, "empty manifest " + path);
  return rows;
}

}  // namespace ast
