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

#include "ast/pipeline.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "ast/checkpoint.h"
#include "ast/wav_io.h"

namespace ast {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr uint64_t kVaeStage = 1, kSceneStage = 2, kProbeStage = 3,
                   kLdmStage = 4;

void write_train_log(const std::string& dir,
                     const std::vector<TrainLogEntry>& log) {
  json arr = json::array();
  for (const auto& e : log) arr.push_back({{"step", e.step}, {"loss", e.loss}});
  std::ofstream f(fs::path(dir) / "train_log.json");
  require(f.good(), ErrorCategory::kIo, "cannot write train log in " + dir);
  f << arr.dump() << "\n";
}

std::vector<MelSpectrogram> load_mels(const std::vector<std::string>& paths) {
  std::vector<MelSpectrogram> mels;
  mels.reserve(paths.size());
  for (const auto& p : paths) mels.push_back(wav_to_logmel(read_wav(p)));
  return mels;
}

SceneEncoderConfig scene_config_of(const RunConfig& cfg) {
  SceneEncoderConfig s;
  s.emb_dim = cfg.scene.emb_dim;
  s.text_width = cfg.scene.text_width;
  s.text_heads = cfg.scene.text_heads;
  s.text_layers = cfg.scene.text_layers;
  s.tau = cfg.scene.tau;
  return s;
}

}  // namespace

DatasetSummary run_simulate(const RunConfig& cfg, const std::string& out_dir) {
  DatasetConfig d;
  d.out_dir = out_dir;
  d.train_per_cell = cfg.dataset.train_per_cell;
  d.eval_per_cell = cfg.dataset.eval_per_cell;
  d.eval_mismatched_per_cell = cfg.dataset.eval_mismatched_per_cell;
  d.speakers = cfg.dataset.speakers;
  d.contents = cfg.dataset.contents;
  d.clip_seconds = cfg.clip_seconds;
  d.seed = cfg.seed;
  auto summary = build_dataset(d);

  auto histogram = [](const char* split, const std::vector<ManifestRow>& rows) {
    if (rows.empty()) return;
    std::map<std::string, int> h;
    for (const auto& r : rows) h[to_string(r.scenario)] += 1;
    std::printf("%s:", split);
    for (const auto& [k, v] : h) std::printf(" %s=%d", k.c_str(), v);
    std::printf("\n");
  };
  histogram("train", summary.train);
  histogram("eval", summary.eval);
  histogram("eval_mismatched", summary.eval_mismatched);
  return summary;
}

std::vector<TrainLogEntry> train_vae(const RunConfig& cfg,
                                     const std::string& data_dir,
                                     const CkptPaths& ckpt) {
  auto rows = load_manifest(data_dir + "/train/manifest.jsonl");
  std::vector<std::string> paths;
  for (const auto& r : rows) {
    paths.push_back(r.ref_path);
    paths.push_back(r.content_path);
  }
  auto mels = load_mels(paths);

  VaeConfig vcfg;
  vcfg.base_ch = cfg.vae.base_ch;
  vcfg.latent_ch = cfg.vae.latent_ch;
  vcfg.beta = cfg.vae.beta;
  Vae vae(vcfg, mix_seed(cfg.seed, kVaeStage));
  Adam opt(vae.parameters(), {.lr = cfg.vae.lr});
  Rng rng(mix_seed(cfg.seed, kVaeStage + 100));

  std::vector<TrainLogEntry> log;
  Rng sample_rng(mix_seed(cfg.seed, kVaeStage + 200));
  for (int step = 0; step < cfg.vae.steps; ++step) {
    std::vector<const MelSpectrogram*> batch;
    for (int i = 0; i < cfg.vae.batch; ++i)
      batch.push_back(&mels[static_cast<size_t>(rng.randint(static_cast<int64_t>(mels.size())))]);
    auto x = mel_batch_to_tensor(batch, vcfg.mel_norm);
    Tape tape;
    TapeScope scope(tape);
    auto enc = vae.encode(x, &sample_rng);
    auto recon = vae.decode(enc.z);
    auto loss = vae.loss(x, recon, enc.mu, enc.logvar);
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
    if (step % 25 == 0 || step + 1 == cfg.vae.steps)
      log.push_back({step, loss->value()});
    if (step % 500 == 0)
      std::printf("[vae] step %d loss %.4f\n", step, loss->value());
  }

  // latent statistics for diffusion scaling
  double sum = 0, sum2 = 0;
  int64_t count = 0;
  for (size_t i = 0; i < mels.size() && i < 64; ++i) {
    auto enc = vae.encode(mel_to_tensor(mels[i], vcfg.mel_norm));
    for (float v : enc.mu->data) {
      sum += v;
      sum2 += static_cast<double>(v) * v;
      ++count;
    }
  }
  const double var = sum2 / count - (sum / count) * (sum / count);
  const float latent_std = static_cast<float>(std::sqrt(std::max(var, 1e-12)));
  vae.save(ckpt.vae(), {{"latent_std", latent_std}});
  write_train_log(ckpt.vae(), log);
  std::printf("[vae] done, latent_std %.4f\n", latent_std);
  return log;
}

std::vector<TrainLogEntry> train_scene(const RunConfig& cfg,
                                       const std::string& data_dir,
                                       const CkptPaths& ckpt) {
  auto rows = load_manifest(data_dir + "/train/manifest.jsonl");
  std::vector<std::string> paths;
  std::vector<std::string> captions;
  for (const auto& r : rows) {
    paths.push_back(r.ref_path);
    captions.push_back(r.caption);
  }
  auto mels = load_mels(paths);

  SceneEncoder enc(scene_config_of(cfg), caption_vocabulary(),
                   mix_seed(cfg.seed, kSceneStage));
  Adam opt(enc.parameters(), {.lr = cfg.scene.lr});
  Rng rng(mix_seed(cfg.seed, kSceneStage + 100));

  std::vector<TrainLogEntry> log;
  for (int step = 0; step < cfg.scene.steps; ++step) {
    std::vector<const MelSpectrogram*> batch;
    std::vector<std::string> batch_captions;
    for (int i = 0; i < cfg.scene.batch; ++i) {
      const auto idx = static_cast<size_t>(rng.randint(static_cast<int64_t>(mels.size())));
      batch.push_back(&mels[idx]);
      batch_captions.push_back(captions[idx]);
    }
    Tape tape;
    TapeScope scope(tape);
    auto loss = enc.contrastive_loss(batch, batch_captions);
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
    if (step % 25 == 0 || step + 1 == cfg.scene.steps)
      log.push_back({step, loss->value()});
    if (step % 500 == 0)
      std::printf("[scene] step %d loss %.4f\n", step, loss->value());
  }
  enc.save(ckpt.scene());
  write_train_log(ckpt.scene(), log);
  return log;
}

std::vector<TrainLogEntry> train_probes(const RunConfig& cfg,
                                        const std::string& data_dir,
                                        const CkptPaths& ckpt) {
  auto rows = load_manifest(data_dir + "/train/manifest.jsonl");
  // probes see only clean synthetic speech
  std::vector<MelSpectrogram> mels;
  std::vector<int> speaker_labels, content_labels;
  for (const auto& r : rows) {
    mels.push_back(wav_to_logmel(regen_clean_speech_train(r, cfg.clip_seconds)));
    speaker_labels.push_back(r.speaker_id);
    content_labels.push_back(r.content_id);
  }

  Probe speaker_probe(ProbeConfig{.classes = cfg.dataset.speakers},
                      mix_seed(cfg.seed, kProbeStage));
  Probe content_probe(ProbeConfig{.classes = cfg.dataset.contents},
                      mix_seed(cfg.seed, kProbeStage + 1));

  std::vector<TrainLogEntry> log;
  auto train_one = [&](Probe& probe, const std::vector<int>& labels,
                       uint64_t salt, const char* name) {
    Adam opt(probe.parameters(), {.lr = cfg.probes.lr});
    Rng rng(mix_seed(cfg.seed, kProbeStage + salt));
    for (int step = 0; step < cfg.probes.steps; ++step) {
      std::vector<const MelSpectrogram*> batch;
      std::vector<int> batch_labels;
      for (int i = 0; i < cfg.probes.batch; ++i) {
        const auto idx = static_cast<size_t>(rng.randint(static_cast<int64_t>(mels.size())));
        batch.push_back(&mels[idx]);
        batch_labels.push_back(labels[idx]);
      }
      Tape tape;
      TapeScope scope(tape);
      auto loss = cross_entropy_logits(probe.logits_batch(batch), batch_labels);
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      if (step % 25 == 0 || step + 1 == cfg.probes.steps)
        log.push_back({step, loss->value()});
      if (step % 500 == 0)
        std::printf("[probe:%s] step %d loss %.4f\n", name, step, loss->value());
    }
    probe.mark_trained();
  };
  train_one(speaker_probe, speaker_labels, 100, "speaker");
  train_one(content_probe, content_labels, 200, "content");

  speaker_probe.save(ckpt.speaker_probe());
  content_probe.save(ckpt.content_probe());
  write_train_log(ckpt.speaker_probe(), log);
  return log;
}

std::vector<TrainLogEntry> train_ldm(const RunConfig& cfg,
                                     const std::string& data_dir,
                                     const CkptPaths& ckpt) {
  require(checkpoint_exists(ckpt.vae()), ErrorCategory::kDependency,
          "ldm stage requires the vae stage first (missing " + ckpt.vae() + ")");
  require(checkpoint_exists(ckpt.scene()), ErrorCategory::kDependency,
          "ldm stage requires the scene stage first (missing " + ckpt.scene() + ")");

  auto vae = Vae::load(ckpt.vae());
  auto scene_enc = SceneEncoder::load(ckpt.scene());
  const float latent_std =
      load_checkpoint_extra(ckpt.vae()).value("latent_std", 1.f);
  const float latent_scale = latent_std > 1e-6f ? 1.f / latent_std : 1.f;

  auto vae_params = vae.parameters();
  auto scene_params = scene_enc.parameters();
  set_trainable(vae_params, false);
  set_trainable(scene_params, false);

  ContentEncoderConfig ccfg;
  ccfg.width = cfg.ldm.content_width;
  ccfg.heads = cfg.ldm.content_heads;
  ccfg.filter_layers = cfg.ldm.filter_layers;
  ccfg.embed_layers = cfg.ldm.embed_layers;
  ccfg.ffn_mult = cfg.ldm.ffn_mult;
  ContentEncoder content_enc(ccfg, mix_seed(cfg.seed, kLdmStage));

  UNetConfig ucfg;
  ucfg.latent_ch = cfg.vae.latent_ch;
  ucfg.scene_dim = cfg.scene.emb_dim;
  ucfg.widths = cfg.ldm.unet_widths;
  ucfg.time_dim = cfg.ldm.time_dim;
  ucfg.xattn_heads = cfg.ldm.xattn_heads;
  ucfg.content_width = cfg.ldm.content_width;
  UNet unet(ucfg, mix_seed(cfg.seed, kLdmStage + 1));
  auto nulls = NullConditions::init(ucfg, mix_seed(cfg.seed, kLdmStage + 2));

  auto schedule = make_schedule(cfg.ldm.t_train, cfg.ldm.beta_min, cfg.ldm.beta_max);

  // Precompute per-item features through the frozen encoders.
  auto rows = load_manifest(data_dir + "/train/manifest.jsonl");
  std::vector<LdmTrainItem> items;
  items.reserve(rows.size());
  for (const auto& r : rows) {
    LdmTrainItem item;
    const auto target_mel = wav_to_logmel(read_wav(r.target_path));
    auto enc = vae.encode(mel_to_tensor(target_mel, vae.config().mel_norm));
    item.x0 = scale(enc.mu, latent_scale);
    item.scene = scene_enc.encode_audio(wav_to_logmel(read_wav(r.ref_path)));
    item.content_mel = wav_to_logmel(read_wav(r.content_path));
    items.push_back(std::move(item));
  }

  auto trainable = unet.parameters();
  auto cparams = content_enc.parameters();
  auto nparams = nulls.parameters();
  trainable.insert(trainable.end(), cparams.begin(), cparams.end());
  trainable.insert(trainable.end(), nparams.begin(), nparams.end());
  Adam opt(trainable, {.lr = cfg.ldm.lr});

  Rng rng(mix_seed(cfg.seed, kLdmStage + 100));
  CondDropConfig drop{cfg.ldm.drop_ref, cfg.ldm.drop_cont};
  std::vector<TrainLogEntry> log;
  for (int step = 0; step < cfg.ldm.steps; ++step) {
    std::vector<const LdmTrainItem*> batch;
    for (int i = 0; i < cfg.ldm.batch; ++i)
      batch.push_back(&items[static_cast<size_t>(rng.randint(static_cast<int64_t>(items.size())))]);
    Tape tape;
    TapeScope scope(tape);
    auto loss = ldm_training_loss(unet, nulls, content_enc, batch, schedule,
                                  drop, rng);
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
    if (step % 25 == 0 || step + 1 == cfg.ldm.steps)
      log.push_back({step, loss->value()});
    if (step % 500 == 0)
      std::printf("[ldm] step %d loss %.4f\n", step, loss->value());
  }

  BundleConfig bcfg;
  bcfg.t_train = cfg.ldm.t_train;
  bcfg.beta_min = cfg.ldm.beta_min;
  bcfg.beta_max = cfg.ldm.beta_max;
  bcfg.ddim_steps = cfg.infer.ddim_steps;
  bcfg.guidance = {cfg.infer.w_ref, cfg.infer.w_cont};
  bcfg.cfg_mode = cfg.ldm.cfg_mode == "cascaded" ? CfgMode::kCascaded
                                                 : CfgMode::kComposable;
  bcfg.latent_scale = latent_scale;
  LdmBundle bundle{std::move(scene_enc), std::move(vae),
                   std::move(content_enc), std::move(unet),
                   std::move(nulls),      std::move(schedule),
                   bcfg};
  bundle.save(ckpt.bundle());
  write_train_log(ckpt.bundle(), log);
  return log;
}

// ---------------------------------------------------------- measurements

float measure_vae_heldout_mae(const Vae& vae,
                              const std::vector<ManifestRow>& eval_rows,
                              int max_items) {
  double mae = 0;
  int64_t count = 0;
  int used = 0;
  for (const auto& r : eval_rows) {
    if (used >= max_items) break;
    const auto mel = wav_to_logmel(read_wav(r.target_path));
    auto x = mel_to_tensor(mel, vae.config().mel_norm);
    auto recon = vae.decode(vae.encode(x).z);
    auto mel_out = vae.tensor_to_mel(recon, 0);
    for (size_t i = 0; i < mel.values.size(); ++i)
      mae += std::fabs(mel_out.values[i] - mel.values[i]);
    count += static_cast<int64_t>(mel.values.size());
    ++used;
  }
  require(count > 0, ErrorCategory::kInput, "no eval rows for vae mae");
  return static_cast<float>(mae / static_cast<double>(count));
}

RetrievalResult measure_retrieval_at1(const SceneEncoder& enc,
                                      const std::vector<ManifestRow>& eval_rows,
                                      int batch, uint64_t seed) {
  // pick rows with pairwise-distinct captions so retrieval is well posed
  Rng rng(seed);
  std::vector<size_t> order(eval_rows.size());
  std::iota(order.begin(), order.end(), 0);
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<size_t>(rng.randint(static_cast<int64_t>(i)))]);
  std::set<std::string> seen;
  std::vector<const ManifestRow*> picked;
  for (size_t idx : order) {
    const auto& r = eval_rows[idx];
    if (seen.count(r.caption)) continue;
    seen.insert(r.caption);
    picked.push_back(&r);
    if (static_cast<int>(picked.size()) == batch) break;
  }
  require(static_cast<int>(picked.size()) == batch, ErrorCategory::kInput,
          "not enough distinct captions for a retrieval batch");

  std::vector<MelSpectrogram> mels;
  std::vector<std::string> captions;
  for (const auto* r : picked) {
    mels.push_back(wav_to_logmel(read_wav(r->ref_path)));
    captions.push_back(r->caption);
  }
  std::vector<const MelSpectrogram*> ptrs;
  for (const auto& m : mels) ptrs.push_back(&m);
  auto audio = enc.encode_audio_batch(ptrs);
  auto text = enc.encode_text_batch(captions);
  auto sims = matmul(audio, transpose(text));  // [n, n]

  int t2a = 0, a2t = 0;
  const int n = batch;
  for (int i = 0; i < n; ++i) {
    int best_row = 0, best_col = 0;
    for (int j = 0; j < n; ++j) {
      if (sims->data[static_cast<size_t>(j) * n + i] >
          sims->data[static_cast<size_t>(best_row) * n + i])
        best_row = j;
      if (sims->data[static_cast<size_t>(i) * n + j] >
          sims->data[static_cast<size_t>(i) * n + best_col])
        best_col = j;
    }
    t2a += best_row == i;  // given caption i, rank audios
    a2t += best_col == i;  // given audio i, rank captions
  }
  return {static_cast<float>(t2a) / n, static_cast<float>(a2t) / n};
}

ProbeAccuracy measure_probe_accuracy(const Probe& speaker_probe,
                                     const Probe& content_probe,
                                     const std::vector<ManifestRow>& eval_rows,
                                     float clip_seconds, int max_items) {
  int n = 0, spk_ok = 0, cont_ok = 0;
  for (const auto& r : eval_rows) {
    if (n >= max_items) break;
    const auto mel = wav_to_logmel(regen_clean_speech_eval(r, clip_seconds));
    spk_ok += speaker_probe.classify(mel) == r.speaker_id;
    cont_ok += content_probe.classify(mel) == r.content_id;
    ++n;
  }
  require(n > 0, ErrorCategory::kInput, "no eval rows for probe accuracy");
  return {static_cast<float>(spk_ok) / n, static_cast<float>(cont_ok) / n};
}

// ------------------------------------------------------------- inference

void write_mel_bin(const std::string& path, const MelSpectrogram& mel) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorCategory::kIo, "cannot write " + path);
  f.write("ASTMEL1\n", 8);
  const int32_t dims[2] = {mel.n_mels, mel.frames};
  f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  f.write(reinterpret_cast<const char*>(mel.values.data()),
          static_cast<std::streamsize>(mel.values.size() * sizeof(float)));
  require(f.good(), ErrorCategory::kIo, "write failed: " + path);
}

MelSpectrogram read_mel_bin(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorCategory::kIo, "cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  require(f.good() && std::string(magic, 8) == "ASTMEL1\n",
          ErrorCategory::kInput, "not a mel file: " + path);
  int32_t dims[2];
  f.read(reinterpret_cast<char*>(dims), sizeof(dims));
  MelSpectrogram mel;
  mel.n_mels = dims[0];
  mel.frames = dims[1];
  mel.values.resize(static_cast<size_t>(dims[0]) * dims[1]);
  f.read(reinterpret_cast<char*>(mel.values.data()),
         static_cast<std::streamsize>(mel.values.size() * sizeof(float)));
  require(f.good(), ErrorCategory::kIo, "short read: " + path);
  return mel;
}

void write_run_log(const std::string& out_dir, const std::string& command,
                   const json& args, const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, ErrorCategory::kIo, "cannot create " + out_dir);
  json j;
  j["command"] = command;
  j["args"] = args;
  j["config"] = cfg.to_json();
  std::string name = "run_" + command + ".json";
  for (auto& c : name)
    if (c == ' ') c = '_';
  std::ofstream f(fs::path(out_dir) / name);
  require(f.good(), ErrorCategory::kIo, "cannot write run log in " + out_dir);
  f << j.dump(2) << "\n";
  std::printf("run log: %s\n", (fs::path(out_dir) / name).string().c_str());
}

TransferResult run_transfer(const RunConfig& cfg, const TransferArgs& args) {
  require(args.ref_audio.has_value() != args.ref_text.has_value(),
          ErrorCategory::kUsage,
          "transfer needs exactly one of --ref-audio / --ref-text");
  auto bundle = LdmBundle::load(args.bundle_dir);
  const auto content = read_wav(args.content_wav);
  const auto scene_emb = args.ref_audio
                             ? bundle.embed_reference_audio(read_wav(*args.ref_audio))
                             : bundle.embed_reference_text(*args.ref_text);
  const GuidanceWeights w{args.w_ref, args.w_cont};
  auto mel = bundle.transfer(content, scene_emb, w, args.seed);
  auto wav = griffin_lim(mel, cfg.infer.griffin_lim_iters, mix_seed(args.seed, 1));

  std::error_code ec;
  fs::create_directories(args.out_dir, ec);
  require(!ec, ErrorCategory::kIo, "cannot create " + args.out_dir);
  TransferResult res;
  res.wav_path = (fs::path(args.out_dir) / "gen.wav").string();
  res.mel_path = (fs::path(args.out_dir) / "gen.mel").string();
  write_wav(res.wav_path, wav);
  write_mel_bin(res.mel_path, mel);
  return res;
}

std::vector<MetricReport> run_evaluate(const RunConfig& cfg,
                                       const EvaluateArgs& args) {
  auto bundle = LdmBundle::load(args.bundle_dir);
  CkptPaths probes{args.probes_root};
  require(checkpoint_exists(probes.content_probe()), ErrorCategory::kDependency,
          "evaluate requires trained probes (missing " + probes.content_probe() + ")");
  auto content_probe = Probe::load(probes.content_probe());
  auto speaker_probe = Probe::load(probes.speaker_probe());
  auto manifest = load_manifest(args.manifest_path);

  EvalOptions opts;
  opts.guidance = {cfg.infer.w_ref, cfg.infer.w_cont};
  opts.seed = cfg.seed;
  opts.max_per_scenario = cfg.eval.max_per_scenario;
  opts.griffin_lim_iters = cfg.infer.griffin_lim_iters;
  opts.ground_truth_as_generated = args.ground_truth_as_generated;
  auto reports = evaluate_scenarios(bundle, content_probe, speaker_probe,
                                    manifest, opts);

  std::error_code ec;
  fs::create_directories(args.out_dir, ec);
  require(!ec, ErrorCategory::kIo, "cannot create " + args.out_dir);
  write_reports((fs::path(args.out_dir) / "reports.json").string(),
                (fs::path(args.out_dir) / "reports.txt").string(), reports);
  std::printf("%s", format_report_table(reports).c_str());
  return reports;
}

}  // namespace ast
