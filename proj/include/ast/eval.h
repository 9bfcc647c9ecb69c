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
// Evaluation protocols: Frechet distance over scene embeddings, scene cosine
// similarity against audio or text references, content error rate, speaker
// similarity, and per-scenario reports.

#pragma once

#include <string>
#include <vector>

#include "ast/diffusion.h"
#include "ast/scene_sim.h"

namespace ast {

struct GaussianStats {
  int dim = 0;
  std::vector<double> mu;     // [dim]
  std::vector<double> sigma;  // [dim*dim], symmetric
};

// Sample mean and unbiased covariance; needs at least two embeddings.
GaussianStats fit_gaussian(const std::vector<std::vector<float>>& embeddings);

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)), via symmetric
// eigendecompositions in double precision. Eigenvalues of the product below
// -1e-5 raise a numeric error; small negatives clamp to zero.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

float scene_similarity_audio(const SceneEncoder& enc, const Waveform& gen,
                             const Waveform& reference);
float scene_similarity_text(const SceneEncoder& enc, const Waveform& gen,
                            const std::string& caption);

// Fraction of generated clips whose content class the probe gets wrong.
float content_error_rate(const Probe& content_probe,
                         const std::vector<const Waveform*>& gens,
                         const std::vector<int>& truth);

// Cosine between penultimate probe embeddings of the two clips.
float speaker_similarity(const Probe& speaker_probe, const Waveform& gen,
                         const Waveform& content_prompt);

struct MetricReport {
  std::string scenario;
  std::string modality;  // "audio" or "text" reference conditioning
  double fad = 0.0;
  float scene_sim_audio = 0.f;
  float scene_sim_text = 0.f;
  float content_error_rate = 0.f;
  float speaker_sim = 0.f;
  int n_items = 0;
};

struct EvalOptions {
  GuidanceWeights guidance;
  uint64_t seed = 0;
  int max_per_scenario = 0;  // 0 means every manifest row
  int griffin_lim_iters = 32;
  // Sanity mode: score the ground-truth targets as if they were generated.
  bool ground_truth_as_generated = false;
};

// One report per (scenario, reference modality); the manifest must cover all
// four scenarios. Deterministic given (bundle, manifest, options).
std::vector<MetricReport> evaluate_scenarios(
    const LdmBundle& bundle, const Probe& content_probe,
    const Probe& speaker_probe, const std::vector<ManifestRow>& manifest,
    const EvalOptions& opts);

std::string format_report_table(const std::vector<MetricReport>& reports);
void write_reports(const std::string& json_path, const std::string& table_path,
                   const std::vector<MetricReport>& reports);

}  // namespace ast
