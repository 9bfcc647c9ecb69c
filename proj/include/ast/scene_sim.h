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
// Procedural corpus: speech-like signals, backgrounds, RIRs, scene
// composition, captions, and (reference, content, target) training pairs.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ast/dsp.h"
#include "ast/rng.h"

namespace ast {

enum class Gender { kMale, kFemale };

const char* to_string(Gender g);

struct SpeakerSpec {
  int speaker_id = 0;
  Gender gender = Gender::kMale;
  float f0_hz = 120.f;          // male 100-140, female 180-240
  float formant_shift = 1.f;

  static SpeakerSpec from_id(int id);
  static constexpr int kDefaultCount = 8;
};

struct ContentSpec {
  struct Segment {
    float f0_mult;
    float dur_frac;  // fractions sum to 1 over the clip
  };
  int content_id = 0;
  std::vector<Segment> pattern;

  static ContentSpec from_id(int id);
  static constexpr int kDefaultCount = 10;
};

enum class BackgroundKind { kNone, kWhite, kPink, kChirpTrain, kAmTone, kBabble };

const char* to_string(BackgroundKind k);
std::optional<BackgroundKind> background_from_string(const std::string& s);

inline constexpr float kT60Levels[4] = {0.f, 0.15f, 0.3f, 0.6f};

struct SceneSpec {
  BackgroundKind kind = BackgroundKind::kNone;
  float t60_seconds = 0.f;
  float snr_db = 0.f;  // ignored when kind == kNone

  bool clean() const { return kind == BackgroundKind::kNone && t60_seconds == 0.f; }
};

struct PromptPair {
  Waveform reference;
  Waveform content;
  Waveform target;  // sample-identical to reference
  SceneSpec ref_scene;
  SceneSpec content_scene;
  SpeakerSpec speaker;      // of the content prompt
  ContentSpec content_spec; // of the content prompt
  std::string caption;      // describes the reference scene
};

// ---- synthesis ----

Waveform synth_speech(const SpeakerSpec& speaker, const ContentSpec& content,
                      float seconds, uint64_t seed);
Waveform synth_background(BackgroundKind kind, float seconds, uint64_t seed);
Rir synth_rir(float t60_seconds, uint64_t seed);
Waveform compose_scene(const Waveform& speech, const SceneSpec& scene,
                       uint64_t seed);

// ---- captions ----

// (place word, sound word) for a scene; the mapping is a bijection from
// (background kind, t60 bucket). The clean scene maps to ("a quiet room", "").
std::pair<std::string, std::string> scene_words(const SceneSpec& scene);
std::string render_caption(const SceneSpec& scene, Gender gender);
int t60_bucket(float t60_seconds);
// Fixed closed vocabulary over all caption words (lowercase).
const std::vector<std::string>& caption_vocabulary();

// ---- pairs ----

// Training pair: one clean rendering placed in two scenes; target == reference.
PromptPair make_training_triplet(const SpeakerSpec& speaker,
                                 const ContentSpec& content_spec,
                                 const SceneSpec& ref_scene,
                                 const SceneSpec& content_scene, float seconds,
                                 uint64_t seed);

// Evaluation pair: the reference carries a different utterance by a
// gender-aligned speaker, as the protocol prescribes.
PromptPair make_eval_pair(const SpeakerSpec& content_speaker,
                          const ContentSpec& content_spec,
                          const SpeakerSpec& ref_speaker,
                          const ContentSpec& ref_content,
                          const SceneSpec& ref_scene,
                          const SceneSpec& content_scene, float seconds,
                          uint64_t seed);

// ---- dataset ----

enum class Scenario { kCleanToClean, kCleanToEnv, kEnvToClean, kEnvToEnv };

const char* to_string(Scenario s);
std::optional<Scenario> scenario_from_string(const std::string& s);
Scenario scenario_of(const SceneSpec& content_scene, const SceneSpec& ref_scene);

struct DatasetConfig {
  std::string out_dir;
  int train_per_cell = 64;
  int eval_per_cell = 32;
  // Diagnostic-only split with gender-mismatched references; off by default.
  int eval_mismatched_per_cell = 0;
  int speakers = SpeakerSpec::kDefaultCount;
  int contents = ContentSpec::kDefaultCount;
  float clip_seconds = 1.f;
  uint64_t seed = 0;
};

struct ManifestRow {
  std::string ref_path;
  std::string content_path;
  std::string target_path;
  std::string caption;
  Scenario scenario = Scenario::kCleanToClean;
  int speaker_id = 0;
  int content_id = 0;
  Gender gender = Gender::kMale;
  float snr_db = 0.f;
  float t60 = 0.f;
  BackgroundKind background_kind = BackgroundKind::kNone;
  uint64_t seed = 0;

  SceneSpec ref_scene() const { return {background_kind, t60, snr_db}; }
};

struct DatasetSummary {
  std::vector<ManifestRow> train;
  std::vector<ManifestRow> eval;
  std::vector<ManifestRow> eval_mismatched;
};

// The clean utterance underlying a manifest row's content prompt, regenerated
// from the row's ids and seed (training and eval splits derive differently).
Waveform regen_clean_speech_train(const ManifestRow& row, float seconds);
Waveform regen_clean_speech_eval(const ManifestRow& row, float seconds);

// Writes WAVs plus one JSON-lines manifest per split under cfg.out_dir.
// Rebuilding with the same seed reproduces every file bitwise.
DatasetSummary build_dataset(const DatasetConfig& cfg);

std::vector<ManifestRow> load_manifest(const std::string& path);

}  // namespace ast
