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

#include "ast/eval.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ast/wav_io.h"

namespace ast {

using nlohmann::json;

GaussianStats fit_gaussian(const std::vector<std::vector<float>>& embeddings) {
  require(embeddings.size() >= 2, ErrorCategory::kInput,
          "fit_gaussian: need at least 2 embeddings");
  const int n = static_cast<int>(embeddings.size());
  const int d = static_cast<int>(embeddings[0].size());
  for (const auto& e : embeddings)
    require(static_cast<int>(e.size()) == d, ErrorCategory::kDimension,
            "fit_gaussian: embedding sizes disagree");
  GaussianStats g;
  g.dim = d;
  g.mu.assign(static_cast<size_t>(d), 0.0);
  g.sigma.assign(static_cast<size_t>(d) * d, 0.0);
  for (const auto& e : embeddings)
    for (int i = 0; i < d; ++i) g.mu[static_cast<size_t>(i)] += e[static_cast<size_t>(i)];
  for (auto& m : g.mu) m /= n;
  for (const auto& e : embeddings)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        g.sigma[static_cast<size_t>(i) * d + j] +=
            (e[static_cast<size_t>(i)] - g.mu[static_cast<size_t>(i)]) *
            (e[static_cast<size_t>(j)] - g.mu[static_cast<size_t>(j)]);
  for (auto& s : g.sigma) s /= (n - 1);
  // enforce symmetry
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double v = 0.5 * (g.sigma[static_cast<size_t>(i) * d + j] +
                              g.sigma[static_cast<size_t>(j) * d + i]);
      g.sigma[static_cast<size_t>(i) * d + j] = v;
      g.sigma[static_cast<size_t>(j) * d + i] = v;
    }
  return g;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  require(a.dim == b.dim && a.dim > 0, ErrorCategory::kInput,
          "frechet_distance: dimension mismatch");
  const int d = a.dim;
  using Mat = Eigen::MatrixXd;
  Mat sa = Eigen::Map<const Mat>(a.sigma.data(), d, d);
  Mat sb = Eigen::Map<const Mat>(b.sigma.data(), d, d);

  Eigen::SelfAdjointEigenSolver<Mat> es_a(sa);
  require(es_a.info() == Eigen::Success, ErrorCategory::kNumeric,
          "frechet_distance: eigensolver failed on sigma_a");
  Eigen::VectorXd va = es_a.eigenvalues();
  for (int i = 0; i < d; ++i) {
    require(va(i) > -1e-5, ErrorCategory::kNumeric,
            "frechet_distance: sigma_a has a significantly negative eigenvalue");
    va(i) = std::sqrt(std::max(va(i), 0.0));
  }
  Mat root_a = es_a.eigenvectors() * va.asDiagonal() *
               es_a.eigenvectors().transpose();

  Mat m = root_a * sb * root_a;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es_m(m);
  require(es_m.info() == Eigen::Success, ErrorCategory::kNumeric,
          "frechet_distance: eigensolver failed on the product");
  double trace_sqrt = 0.0;
  for (int i = 0; i < d; ++i) {
    const double ev = es_m.eigenvalues()(i);
    require(ev > -1e-5, ErrorCategory::kNumeric,
            "frechet_distance: product matrix not PSD");
    trace_sqrt += std::sqrt(std::max(ev, 0.0));
  }

  double mean_sq = 0.0;
  for (int i = 0; i < d; ++i) {
    const double diff = a.mu[static_cast<size_t>(i)] - b.mu[static_cast<size_t>(i)];
    mean_sq += diff * diff;
  }
  return mean_sq + sa.trace() + sb.trace() - 2.0 * trace_sqrt;
}

float scene_similarity_audio(const SceneEncoder& enc, const Waveform& gen,
                             const Waveform& reference) {
  return cosine(enc.encode_audio(wav_to_logmel(gen)),
                enc.encode_audio(wav_to_logmel(reference)));
}

float scene_similarity_text(const SceneEncoder& enc, const Waveform& gen,
                            const std::string& caption) {
  return cosine(enc.encode_audio(wav_to_logmel(gen)),
                enc.encode_text(caption));
}

float content_error_rate(const Probe& content_probe,
                         const std::vector<const Waveform*>& gens,
                         const std::vector<int>& truth) {
  require(gens.size() == truth.size(), ErrorCategory::kInput,
          "content_error_rate: size mismatch");
  require(!gens.empty(), ErrorCategory::kInput,
          "content_error_rate: empty input");
  int wrong = 0;
  for (size_t i = 0; i < gens.size(); ++i)
    wrong += content_probe.classify(wav_to_logmel(*gens[i])) != truth[i];
  return static_cast<float>(wrong) / static_cast<float>(gens.size());
}

float speaker_similarity(const Probe& speaker_probe, const Waveform& gen,
                         const Waveform& content_prompt) {
  return cosine(speaker_probe.embed(wav_to_logmel(gen)),
                speaker_probe.embed(wav_to_logmel(content_prompt)));
}

std::vector<MetricReport> evaluate_scenarios(
    const LdmBundle& bundle, const Probe& content_probe,
    const Probe& speaker_probe, const std::vector<ManifestRow>& manifest,
    const EvalOptions& opts) {
  std::map<Scenario, std::vector<const ManifestRow*>> cells;
  for (const auto& row : manifest) cells[row.scenario].push_back(&row);
  for (Scenario sc : {Scenario::kCleanToClean, Scenario::kCleanToEnv,
                      Scenario::kEnvToClean, Scenario::kEnvToEnv})
    require(cells.count(sc) > 0, ErrorCategory::kInput,
            std::string("evaluation manifest is missing scenario ") +
                to_string(sc));

  std::vector<MetricReport> reports;
  for (Scenario sc : {Scenario::kCleanToClean, Scenario::kCleanToEnv,
                      Scenario::kEnvToClean, Scenario::kEnvToEnv}) {
    auto rows = cells[sc];
    if (opts.max_per_scenario > 0 &&
        static_cast<int>(rows.size()) > opts.max_per_scenario)
      rows.resize(static_cast<size_t>(opts.max_per_scenario));

    for (const char* modality : {"audio", "text"}) {
      const bool text_ref = std::string(modality) == "text";
      MetricReport rep;
      rep.scenario = to_string(sc);
      rep.modality = modality;
      rep.n_items = static_cast<int>(rows.size());

      std::vector<std::vector<float>> gen_embs, target_embs;
      std::vector<Waveform> gen_wavs;
      std::vector<int> truth;
      double sim_a = 0, sim_t = 0, spk = 0;
      for (size_t i = 0; i < rows.size(); ++i) {
        const ManifestRow& row = *rows[i];
        const auto content_wav = read_wav(row.content_path);
        const auto reference_wav = read_wav(row.ref_path);
        const auto target_wav = read_wav(row.target_path);
        const uint64_t item_seed =
            mix_seed(opts.seed, (text_ref ? 0x1000000u : 0u) +
                                    static_cast<uint64_t>(i) * 8 +
                                    static_cast<uint64_t>(sc));

        Waveform gen;
        if (opts.ground_truth_as_generated) {
          gen = target_wav;
        } else {
          const auto scene_emb =
              text_ref ? bundle.embed_reference_text(row.caption)
                       : bundle.embed_reference_audio(reference_wav);
          auto mel = bundle.transfer(content_wav, scene_emb, opts.guidance,
                                     item_seed);
          gen = griffin_lim(mel, opts.griffin_lim_iters, mix_seed(item_seed, 1));
        }

        const auto gen_mel = wav_to_logmel(gen);
        auto gen_emb = bundle.scene_encoder.encode_audio(gen_mel);
        auto tgt_emb =
            bundle.scene_encoder.encode_audio(wav_to_logmel(target_wav));
        sim_a += cosine(gen_emb,
                        bundle.scene_encoder.encode_audio(
                            wav_to_logmel(reference_wav)));
        sim_t += cosine(gen_emb, bundle.scene_encoder.encode_text(row.caption));
        spk += speaker_similarity(speaker_probe, gen, content_wav);
        gen_embs.push_back(std::move(gen_emb));
        target_embs.push_back(std::move(tgt_emb));
        gen_wavs.push_back(std::move(gen));
        truth.push_back(row.content_id);
      }

      std::vector<const Waveform*> gen_ptrs;
      gen_ptrs.reserve(gen_wavs.size());
      for (const auto& w : gen_wavs) gen_ptrs.push_back(&w);
      rep.fad = frechet_distance(fit_gaussian(gen_embs),
                                 fit_gaussian(target_embs));
      rep.scene_sim_audio = static_cast<float>(sim_a / rows.size());
      rep.scene_sim_text = static_cast<float>(sim_t / rows.size());
      rep.content_error_rate = content_error_rate(content_probe, gen_ptrs, truth);
      rep.speaker_sim = static_cast<float>(spk / rows.size());
      reports.push_back(std::move(rep));
    }
  }
  return reports;
}

std::string format_report_table(const std::vector<MetricReport>& reports) {
  std::ostringstream os;
  os << "Scenario      Ref    FAD      SceneSim(A)  SceneSim(T)  ContentErr  SpkSim   N\n";
  char line[160];
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line),
                  "%-13s %-6s %-8.4f %-12.4f %-12.4f %-11.4f %-8.4f %d\n",
                  r.scenario.c_str(), r.modality.c_str(), r.fad,
                  r.scene_sim_audio, r.scene_sim_text, r.content_error_rate,
                  r.speaker_sim, r.n_items);
    os << line;
  }
  return os.str();
}

void write_reports(const std::string& json_path, const std::string& table_path,
                   const std::vector<MetricReport>& reports) {
  json arr = json::array();
  for (const auto& r : reports) {
    arr.push_back({{"scenario", r.scenario},
                   {"modality", r.modality},
                   {"fad", r.fad},
                   {"scene_sim_audio", r.scene_sim_audio},
                   {"scene_sim_text", r.scene_sim_text},
                   {"content_error_rate", r.content_error_rate},
                   {"speaker_sim", r.speaker_sim},
                   {"n_items", r.n_items}});
  }
  std::ofstream jf(json_path);
  require(jf.good(), ErrorCategory::kIo, "cannot write " + json_path);
  jf << arr.dump(2) << "\n";
  std::ofstream tf(table_path);
  require(tf.good(), ErrorCategory::kIo, "cannot write " + table_path);
  tf << format_report_table(reports);
}

}  // namespace ast
