#pragma once

// Pipeline orchestration behind the vidsig command-line tool. Each stage
// reads its prerequisites from the work directory, writes checkpoints and
// JSON reports stamped with the config hash, and stays byte-reproducible
// under a fixed seed (wall-clock timing sections excluded).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidsig/container.hpp"
#include "vidsig/detection.hpp"
#include "vidsig/errors.hpp"
#include "vidsig/metrics.hpp"
#include "vidsig/model.hpp"
#include "vidsig/pas.hpp"
#include "vidsig/png.hpp"
#include "vidsig/synthetic.hpp"
#include "vidsig/tamper.hpp"
#include "vidsig/training.hpp"

namespace vidsig::cli {

// Exit-code contract (stable; tested per error class):
//   0 success / watermark detected
//   1 watermark not detected
//   2 runtime error
//   3 missing prerequisite artifact
//   4 malformed config or usage
//   5 key-length mismatch
enum ExitCode {
  kOk = 0,
  kNotDetected = 1,
  kRuntimeError = 2,
  kMissingArtifact = 3,
  kBadConfig = 4,
  kKeyMismatch = 5
};

struct PipelineConfig {
  std::uint64_t seed = 42;
  std::string work_dir = "runs/desk";
  std::string report_dir;  // default: <work_dir>/reports

  SyntheticDatasetSpec dataset;
  int holdout = 50;

  ModelSpec model;
  AutoencoderPretrainConfig autoencoder;
  ExtractorPretrainConfig extractor;
  PASConfig pas;

  // fine-tune stage
  int train_steps = 600;
  double warmup_fraction = 0.2;
  double lr_base = 5e-4;
  double lr_min = 1e-6;
  int batch_clips = 2;
  LossWeights weights;
  MetricKind train_metric = MetricKind::Mse;
  std::string message = "auto";  // "auto" or explicit bit string

  DetectionConfig detection;
  std::vector<double> eval_fprs = {1e-2, 1e-3, 1e-4, 1e-6};
  std::vector<std::string> attacks = {"fd",
                                      "fs",
                                      "fi",
                                      "fig",
                                      "fa:n=3",
                                      "fa:n=5",
                                      "gauss_noise:sigma=0.02",
                                      "gauss_noise:sigma=0.05",
                                      "gauss_blur:sigma=0.5",
                                      "gauss_blur:sigma=1.0",
                                      "salt_pepper:p=0.01",
                                      "salt_pepper:p=0.05",
                                      "crop_resize:fraction=0.9",
                                      "crop_resize:fraction=0.75"};
  int null_trials = 200;
  int timing_runs = 20;
  int timing_clips = 4;

  std::string config_hash;
  nlohmann::json effective;  // config after overrides, as hashed

  std::filesystem::path data_dir() const { return std::filesystem::path(work_dir) / "data"; }
  std::filesystem::path ckpt_dir() const { return std::filesystem::path(work_dir) / "checkpoints"; }
  std::filesystem::path reports() const {
    return report_dir.empty() ? std::filesystem::path(work_dir) / "reports"
                              : std::filesystem::path(report_dir);
  }
};

// ---------------------------------------------------------------------------
// Config parsing

namespace detail {

inline nlohmann::json parse_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path);
  try {
    nlohmann::json j;
    is >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path + ": " + e.what());
  }
}

// Applies "a.b.c=value" style overrides; values parse as JSON when possible.
inline void apply_override(nlohmann::json& j, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("override needs key=value: " + kv);
  const std::string keypath = kv.substr(0, eq);
  const std::string valstr = kv.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(valstr);
  } catch (const nlohmann::json::exception&) {
    value = valstr;  // plain string
  }
  nlohmann::json* cur = &j;
  std::size_t pos = 0;
  while (true) {
    const auto dot = keypath.find('.', pos);
    const std::string key = keypath.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (key.empty()) throw ConfigError("bad override key: " + keypath);
    if (dot == std::string::npos) {
      (*cur)[key] = value;
      return;
    }
    cur = &(*cur)[key];
    pos = dot + 1;
  }
}

inline std::string hash_hex(const nlohmann::json& j) {
  const std::uint64_t h = fnv1a64(j.dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

inline std::vector<ShapeKind> parse_shape_kinds(const nlohmann::json& arr) {
  std::vector<ShapeKind> kinds;
  for (const auto& s : arr) {
    const auto name = s.get<std::string>();
    if (name == "rectangle") kinds.push_back(ShapeKind::Rectangle);
    else if (name == "circle") kinds.push_back(ShapeKind::Circle);
    else if (name == "gradient") kinds.push_back(ShapeKind::Gradient);
    else throw ConfigError("unknown shape kind: " + name);
  }
  return kinds;
}

}  // namespace detail

inline PipelineConfig parse_config(nlohmann::json j,
                                   const std::vector<std::string>& overrides = {}) {
  using detail::get_or;
  for (const auto& kv : overrides) detail::apply_override(j, kv);

  PipelineConfig c;
  c.effective = j;
  c.config_hash = detail::hash_hex(j);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.work_dir = get_or<std::string>(j, "work_dir", c.work_dir);
  if (const char* env = std::getenv("VIDSIG_REPORT_DIR"); env && *env) c.report_dir = env;
  else c.report_dir = get_or<std::string>(j, "report_dir", "");

  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    c.dataset.count = get_or(d, "count", c.dataset.count);
    c.dataset.frames = get_or(d, "frames", c.dataset.frames);
    c.dataset.height = get_or(d, "height", c.dataset.height);
    c.dataset.width = get_or(d, "width", c.dataset.width);
    c.dataset.speed_min = get_or(d, "speed_min", c.dataset.speed_min);
    c.dataset.speed_max = get_or(d, "speed_max", c.dataset.speed_max);
    if (d.contains("shapes")) c.dataset.kinds = detail::parse_shape_kinds(d["shapes"]);
    c.holdout = get_or(d, "holdout", c.holdout);
  }
  c.dataset.seed = c.seed;
  if (c.holdout < 1 || c.holdout >= c.dataset.count)
    throw ConfigError("dataset.holdout must be in [1, count)");

  if (j.contains("model")) c.model = ModelSpec::from_json(j["model"]);

  if (j.contains("autoencoder")) {
    const auto& a = j["autoencoder"];
    c.autoencoder.steps = get_or(a, "steps", c.autoencoder.steps);
    c.autoencoder.batch_frames = get_or(a, "batch_frames", c.autoencoder.batch_frames);
    c.autoencoder.lr = get_or(a, "lr", c.autoencoder.lr);
    c.autoencoder.target_psnr_db = get_or(a, "target_psnr_db", c.autoencoder.target_psnr_db);
    c.autoencoder.eval_every = get_or(a, "eval_every", c.autoencoder.eval_every);
  }
  c.autoencoder.model = c.model;
  c.autoencoder.seed = Rng(c.seed).fork("stage-autoencoder").next_u64();

  if (j.contains("extractor")) {
    const auto& e = j["extractor"];
    c.extractor.steps = get_or(e, "steps", c.extractor.steps);
    c.extractor.batch = get_or(e, "batch", c.extractor.batch);
    c.extractor.lr = get_or(e, "lr", c.extractor.lr);
    c.extractor.lambda_img = get_or(e, "lambda_img", c.extractor.lambda_img);
    c.extractor.augment = get_or(e, "augment", c.extractor.augment);
    c.extractor.target_bit_acc = get_or(e, "target_bit_acc", c.extractor.target_bit_acc);
    c.extractor.eval_every = get_or(e, "eval_every", c.extractor.eval_every);
  }
  c.extractor.model = c.model;
  c.extractor.seed = Rng(c.seed).fork("stage-extractor").next_u64();

  if (j.contains("pas")) {
    const auto& p = j["pas"];
    c.pas.sigma = get_or(p, "sigma", c.pas.sigma);
    c.pas.sigma_relative = get_or(p, "sigma_relative", c.pas.sigma_relative);
    if (p.contains("tau") && !p["tau"].is_null()) c.pas.tau = p["tau"].get<double>();
    c.pas.freeze_top_fraction = get_or(p, "freeze_top_fraction", c.pas.freeze_top_fraction);
    c.pas.samples = get_or(p, "samples", c.pas.samples);
    c.pas.repeats = get_or(p, "repeats", c.pas.repeats);
    if (p.contains("metric")) c.pas.metric = metric_from_string(p["metric"].get<std::string>());
  }
  c.pas.seed = Rng(c.seed).fork("stage-pas").next_u64();

  if (j.contains("train")) {
    const auto& t = j["train"];
    c.train_steps = get_or(t, "steps", c.train_steps);
    c.warmup_fraction = get_or(t, "warmup_fraction", c.warmup_fraction);
    c.lr_base = get_or(t, "lr_base", c.lr_base);
    c.lr_min = get_or(t, "lr_min", c.lr_min);
    c.batch_clips = get_or(t, "batch_clips", c.batch_clips);
    c.weights.alpha1 = get_or(t, "alpha1", c.weights.alpha1);
    c.weights.alpha2 = get_or(t, "alpha2", c.weights.alpha2);
    c.weights.lambda1 = get_or(t, "lambda1", c.weights.lambda1);
    c.weights.lambda2 = get_or(t, "lambda2", c.weights.lambda2);
    c.weights.lambda3 = get_or(t, "lambda3", c.weights.lambda3);
    if (t.contains("metric")) c.train_metric = metric_from_string(t["metric"].get<std::string>());
    c.message = get_or<std::string>(t, "message", c.message);
  }

  if (j.contains("detection")) {
    const auto& d = j["detection"];
    c.detection.fpr_target = get_or(d, "fpr", c.detection.fpr_target);
    const auto mode = get_or<std::string>(d, "mode", "strict");
    if (mode == "strict") c.detection.mode = ThresholdMode::StrictGreater;
    else if (mode == "inclusive") c.detection.mode = ThresholdMode::InclusiveGeq;
    else throw ConfigError("detection.mode must be strict or inclusive");
  }
  c.detection.k = c.model.k;

  if (j.contains("eval")) {
    const auto& e = j["eval"];
    if (e.contains("fprs")) c.eval_fprs = e["fprs"].get<std::vector<double>>();
    if (e.contains("attacks")) c.attacks = e["attacks"].get<std::vector<std::string>>();
    c.null_trials = get_or(e, "null_trials", c.null_trials);
    c.timing_runs = get_or(e, "timing_runs", c.timing_runs);
    c.timing_clips = get_or(e, "timing_clips", c.timing_clips);
  }

  c.detection.validate();
  for (const auto& a : c.attacks) AttackSpec::parse(a);  // fail fast on bad grammar
  return c;
}

inline PipelineConfig load_config(const std::string& path,
                                  const std::vector<std::string>& overrides = {}) {
  return parse_config(detail::parse_json_file(path), overrides);
}

// ---------------------------------------------------------------------------
// Shared artifact helpers

namespace detail {

inline void write_report(const std::filesystem::path& path, const nlohmann::json& j) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw IoError("cannot write report: " + path.string());
  os << j.dump(2) << "\n";
}

inline nlohmann::json read_json(const std::filesystem::path& path, const std::string& stage) {
  std::ifstream is(path);
  if (!is)
    throw MissingArtifactError(path.string() + " not found; run `vidsig " + stage + "` first");
  nlohmann::json j;
  is >> j;
  return j;
}

struct Corpus {
  std::vector<VideoTensor> train, holdout;
};

inline Corpus load_corpus(const PipelineConfig& cfg) {
  const auto manifest =
      read_json(cfg.data_dir() / "dataset.json", "synth-data");
  const int count = manifest.at("count").get<int>();
  const int holdout = manifest.at("holdout").get<int>();
  Corpus corpus;
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "clip_%05d.vst", i);
    auto path = cfg.data_dir() / name;
    if (!std::filesystem::exists(path))
      throw MissingArtifactError(path.string() + " not found; run `vidsig synth-data` first");
    auto clip = load_video(path.string());
    (i < count - holdout ? corpus.train : corpus.holdout).push_back(std::move(clip));
  }
  return corpus;
}

inline WatermarkMessage resolve_key(const PipelineConfig& cfg) {
  if (cfg.message == "auto") {
    Rng rng = Rng(cfg.seed).fork("watermark-key");
    return WatermarkMessage::random(cfg.model.k, rng);
  }
  auto m = WatermarkMessage::parse(cfg.message);
  if (m.k() != cfg.model.k)
    throw KeyLengthError("configured message length " + std::to_string(m.k()) +
                         " does not match model k=" + std::to_string(cfg.model.k));
  return m;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stage commands

inline int cmd_synth_data(const PipelineConfig& cfg) {
  auto clips = generate_synthetic_dataset(cfg.dataset);
  std::filesystem::create_directories(cfg.data_dir());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "clip_%05zu.vst", i);
    save_video(clips[i], (cfg.data_dir() / name).string());
  }
  nlohmann::json manifest = {{"count", cfg.dataset.count},
                             {"frames", cfg.dataset.frames},
                             {"height", cfg.dataset.height},
                             {"width", cfg.dataset.width},
                             {"holdout", cfg.holdout},
                             {"seed", cfg.seed},
                             {"config_hash", cfg.config_hash}};
  detail::write_report(cfg.data_dir() / "dataset.json", manifest);
  std::cout << "wrote " << clips.size() << " clips to " << cfg.data_dir().string() << "\n";
  return kOk;
}

inline int cmd_pretrain(const PipelineConfig& cfg) {
  auto corpus = detail::load_corpus(cfg);
  auto [models, ae_res] = pretrain_autoencoder(cfg.autoencoder, corpus.train, corpus.holdout);
  auto& [enc, dec] = models;
  save_checkpoint((cfg.ckpt_dir() / "encoder").string(), "encoder", enc.net, cfg.model,
                  ae_res.steps_run, cfg.seed, cfg.config_hash);
  save_checkpoint((cfg.ckpt_dir() / "decoder").string(), "decoder", dec.net, cfg.model,
                  ae_res.steps_run, cfg.seed, cfg.config_hash);

  auto [ext, ext_res] = pretrain_watermark_extractor(cfg.extractor, corpus.train, corpus.holdout);
  save_checkpoint((cfg.ckpt_dir() / "extractor").string(), "extractor", ext.net, cfg.model,
                  ext_res.steps_run, cfg.seed, cfg.config_hash);

  nlohmann::json report = {
      {"config_hash", cfg.config_hash},
      {"autoencoder",
       {{"steps_run", ae_res.steps_run}, {"holdout_psnr_db", ae_res.holdout_psnr_db}}},
      {"extractor",
       {{"steps_run", ext_res.steps_run},
        {"holdout_bit_accuracy", ext_res.holdout_bit_accuracy},
        {"k", cfg.model.k}}}};
  detail::write_report(cfg.reports() / "pretrain_report.json", report);
  std::cout << "autoencoder: holdout PSNR " << ae_res.holdout_psnr_db << " dB after "
            << ae_res.steps_run << " steps\n"
            << "extractor: holdout bit accuracy " << ext_res.holdout_bit_accuracy << " after "
            << ext_res.steps_run << " steps\n";
  return kOk;
}

inline int cmd_pas(const PipelineConfig& cfg) {
  auto corpus = detail::load_corpus(cfg);
  auto [enc, enc_info] = load_encoder((cfg.ckpt_dir() / "encoder").string());
  auto [dec, dec_info] = load_decoder((cfg.ckpt_dir() / "decoder").string());

  if (static_cast<int>(corpus.holdout.size()) < cfg.pas.samples)
    throw ConfigError("pas.samples exceeds holdout clip count");
  std::vector<LatentTensor> latents;
  for (int i = 0; i < cfg.pas.samples; ++i) latents.push_back(encode(enc, corpus.holdout[i]));

  auto report = pas_select(dec, latents, cfg.pas);
  auto j = report.to_json();
  j["config_hash"] = cfg.config_hash;
  detail::write_report(cfg.reports() / "pas_report.json", j);
  std::cout << "layer sensitivity (sigma=" << report.sigma
            << (report.sigma_relative ? " relative" : " absolute") << ", tau=" << report.tau_used
            << "):\n"
            << report.histogram();
  if (report.empty_selection)
    std::cout << "warning: no layers selected for fine-tuning at this threshold\n";
  return kOk;
}

inline int cmd_finetune(const PipelineConfig& cfg) {
  auto corpus = detail::load_corpus(cfg);
  auto [enc, enc_info] = load_encoder((cfg.ckpt_dir() / "encoder").string());
  auto [dec, dec_info] = load_decoder((cfg.ckpt_dir() / "decoder").string());
  auto [ext, ext_info] = load_extractor((cfg.ckpt_dir() / "extractor").string());
  auto pas_report = LayerSensitivityReport::from_json(
      detail::read_json(cfg.reports() / "pas_report.json", "pas"));

  TrainConfig tc;
  tc.message = detail::resolve_key(cfg);
  tc.total_steps = cfg.train_steps;
  tc.warmup_steps = static_cast<int>(std::lround(cfg.warmup_fraction * cfg.train_steps));
  tc.lr_base = cfg.lr_base;
  tc.lr_min = cfg.lr_min;
  tc.batch_clips = cfg.batch_clips;
  tc.weights = cfg.weights;
  tc.metric = cfg.train_metric;
  tc.seed = Rng(cfg.seed).fork("stage-finetune").next_u64();

  auto [tuned, log] = finetune(dec, enc, ext, corpus.train, tc, pas_report);

  save_checkpoint((cfg.ckpt_dir() / "decoder_wm").string(), "decoder", tuned.net, cfg.model,
                  cfg.train_steps, cfg.seed, cfg.config_hash,
                  {{"key", tc.message.to_string()}});
  {
    std::ofstream os(cfg.reports() / "trainlog.jsonl");
    log.write_jsonl(os);
  }
  nlohmann::json report = {{"config_hash", cfg.config_hash},
                           {"key", tc.message.to_string()},
                           {"steps", cfg.train_steps},
                           {"final_bit_accuracy", log.final_bit_accuracy},
                           {"final_total_loss", log.final_total_loss},
                           {"frozen_layers", nlohmann::json::array()}};
  for (const auto& l : pas_report.layers)
    if (!l.selected) report["frozen_layers"].push_back(l.layer);
  detail::write_report(cfg.reports() / "finetune_report.json", report);
  std::cout << "fine-tune done: probe bit accuracy " << log.final_bit_accuracy << "\n";
  return kOk;
}

inline int cmd_embed(const PipelineConfig& cfg, const std::string& input_path, int index,
                     const std::string& output_path, const std::string& png_dir = "") {
  auto [enc, enc_info] = load_encoder((cfg.ckpt_dir() / "encoder").string());
  auto [dec, dec_info] = load_decoder((cfg.ckpt_dir() / "decoder_wm").string());
  VideoTensor input;
  if (!input_path.empty()) {
    input = load_video(input_path);
  } else {
    auto corpus = detail::load_corpus(cfg);
    if (index < 0 || index >= static_cast<int>(corpus.holdout.size()))
      throw ConfigError("embed: holdout index out of range");
    input = corpus.holdout[static_cast<std::size_t>(index)];
  }
  auto z = encode(enc, input);
  auto wm = decode(dec, z);
  save_video(wm, output_path);
  if (!png_dir.empty()) export_png_frames(wm, png_dir);
  std::cout << "wrote watermarked video to " << output_path << "\n";
  return kOk;
}

inline nlohmann::json detection_to_json(const DetectionResult& r, const PipelineConfig& cfg) {
  return {{"config_hash", cfg.config_hash},
          {"matches", r.matches},
          {"threshold", r.threshold},
          {"fpr_at_threshold", r.fpr_at_threshold},
          {"detected", r.detected},
          {"bit_accuracy", r.bit_acc},
          {"voted_message", r.voted.to_string()},
          {"per_frame_matches", r.per_frame_matches}};
}

inline int cmd_detect(const PipelineConfig& cfg, const std::string& video_path,
                      std::string key_str) {
  auto [ext, ext_info] = load_extractor((cfg.ckpt_dir() / "extractor").string());
  auto video = load_video(video_path);
  WatermarkMessage key;
  if (key_str.empty() || key_str == "stored") {
    auto info = read_checkpoint_manifest((cfg.ckpt_dir() / "decoder_wm").string());
    if (!info.extra.contains("key"))
      throw MissingArtifactError("no stored key; run `vidsig finetune` first");
    key = WatermarkMessage::parse(info.extra["key"].get<std::string>());
  } else {
    key = WatermarkMessage::parse(key_str);
  }
  auto result = detect(video, ext, key, cfg.detection);
  auto j = detection_to_json(result, cfg);
  detail::write_report(cfg.reports() / "detection_report.json", j);
  std::cout << j.dump(2) << "\n";
  return result.detected ? kOk : kNotDetected;
}

inline int cmd_attack(const PipelineConfig& cfg, const std::string& video_path,
                      const std::string& attack_str, const std::string& output_path) {
  auto spec = AttackSpec::parse(attack_str);
  if (spec.seed == 0) spec.seed = Rng(cfg.seed).fork("stage-attack").next_u64();
  auto video = load_video(video_path);
  auto out = apply_attack(video, spec);
  save_video(out, output_path);
  std::cout << "applied " << spec.to_string() << ": " << video.n << " -> " << out.n
            << " frames, wrote " << output_path << "\n";
  return kOk;
}

struct EvaluateResult {
  nlohmann::json report;
  double benign_bit_accuracy = 0;
  double psnr_db = 0;
};

inline EvaluateResult evaluate_pipeline(const PipelineConfig& cfg) {
  using clock = std::chrono::steady_clock;
  auto corpus = detail::load_corpus(cfg);
  auto [enc, enc_info] = load_encoder((cfg.ckpt_dir() / "encoder").string());
  auto [dec, dec_info] = load_decoder((cfg.ckpt_dir() / "decoder").string());
  auto [wm_dec, wm_info] = load_decoder((cfg.ckpt_dir() / "decoder_wm").string());
  auto [ext, ext_info] = load_extractor((cfg.ckpt_dir() / "extractor").string());
  if (!wm_info.extra.contains("key"))
    throw MissingArtifactError("watermarked decoder has no stored key; run `vidsig finetune`");
  const auto key = WatermarkMessage::parse(wm_info.extra["key"].get<std::string>());

  // Reconstruction pairs on the held-out clips.
  std::vector<LatentTensor> latents;
  std::vector<VideoTensor> vanilla, watermarked;
  for (const auto& clip : corpus.holdout) {
    latents.push_back(encode(enc, clip));
    vanilla.push_back(decode(dec, latents.back()));
    watermarked.push_back(decode(wm_dec, latents.back()));
  }
  const int n = static_cast<int>(watermarked.size());

  nlohmann::json report;
  report["config_hash"] = cfg.config_hash;
  report["key"] = key.to_string();
  report["videos"] = n;

  // Benign extraction + TPR table.
  std::vector<WatermarkMessage> keys(watermarked.size(), key);
  auto benign = evaluate_corpus(watermarked, keys, ext, cfg.model.k, cfg.eval_fprs,
                                cfg.detection.mode);
  report["benign"]["bit_accuracy"] = benign.mean_bit_accuracy;
  for (auto& [fpr, tpr] : benign.tpr_at_fpr) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0e", fpr);
    report["benign"]["tpr"][buf] = tpr;
  }

  // Quality against the vanilla reconstructions.
  double mean_psnr = 0, mean_ssim = 0, mean_tlp = 0;
  for (int i = 0; i < n; ++i) {
    auto q = quality_report(watermarked[static_cast<std::size_t>(i)],
                            vanilla[static_cast<std::size_t>(i)]);
    mean_psnr += q.psnr_db;
    mean_ssim += q.ssim_value;
    mean_tlp += q.tlp_value;
  }
  report["quality"] = {{"psnr_db", mean_psnr / n},
                       {"ssim", mean_ssim / n},
                       {"tlp", mean_tlp / n},
                       {"lp_metric", "downsampled-mse (LPIPS substitute)"}};

  // Robustness table.
  Rng attack_rng = Rng(cfg.seed).fork("eval-attacks");
  for (const auto& attack_str : cfg.attacks) {
    auto spec = AttackSpec::parse(attack_str);
    std::vector<VideoTensor> tampered;
    tampered.reserve(watermarked.size());
    for (const auto& v : watermarked) {
      spec.seed = attack_rng.next_u64();
      tampered.push_back(apply_attack(v, spec));
    }
    auto s = evaluate_corpus(tampered, keys, ext, cfg.model.k, {cfg.detection.fpr_target},
                             cfg.detection.mode);
    report["attacks"][attack_str] = {{"bit_accuracy", s.mean_bit_accuracy},
                                     {"tpr", s.tpr_at_fpr[0].second}};
  }

  // Null calibration: vanilla reconstructions against random keys.
  {
    Rng null_rng = Rng(cfg.seed).fork("eval-null");
    int false_positives = 0;
    const int tau = detection_threshold(cfg.model.k, cfg.detection.fpr_target, cfg.detection.mode);
    for (int trial = 0; trial < cfg.null_trials; ++trial) {
      const auto& video = vanilla[static_cast<std::size_t>(trial % n)];
      auto soft = extract(ext, video);
      auto voted = majority_vote(soft);
      auto random_key = WatermarkMessage::random(cfg.model.k, null_rng);
      const int m = match_count(voted, random_key);
      false_positives +=
          cfg.detection.mode == ThresholdMode::StrictGreater ? (m > tau) : (m >= tau);
    }
    // Largest count c with P(X <= c | n, p=target) <= 0.95 gives the 95%
    // binomial upper limit for the empirical rate.
    int limit = 0;
    {
      long double cdf = 0;
      for (int c = 0; c <= cfg.null_trials; ++c) {
        long double logp = 0;
        for (int i = 0; i < c; ++i)
          logp += std::log((long double)(cfg.null_trials - i)) - std::log((long double)(i + 1));
        logp += c * std::log((long double)cfg.detection.fpr_target) +
                (cfg.null_trials - c) * std::log1p(-(long double)cfg.detection.fpr_target);
        cdf += std::exp(logp);
        if (cdf >= 0.95L) {
          limit = c;
          break;
        }
      }
    }
    report["null_calibration"] = {
        {"trials", cfg.null_trials},
        {"false_positives", false_positives},
        {"empirical_fpr", static_cast<double>(false_positives) / cfg.null_trials},
        {"fpr_target", cfg.detection.fpr_target},
        {"ci95_upper_count", limit},
        {"within_bound", false_positives <= limit}};
  }

  // Insertion/extraction latency: medians over timing_runs on a fixed
  // latent subset. Watermarking lives inside generation, so T_i is the
  // decode-time difference and should sit at measurement noise.
  {
    const int tc = std::min(cfg.timing_clips, n);
    std::vector<double> t_vanilla, t_wm, t_extract;
    for (int run = 0; run < cfg.timing_runs; ++run) {
      auto t0 = clock::now();
      for (int i = 0; i < tc; ++i) decode(dec, latents[static_cast<std::size_t>(i)]);
      auto t1 = clock::now();
      for (int i = 0; i < tc; ++i) decode(wm_dec, latents[static_cast<std::size_t>(i)]);
      auto t2 = clock::now();
      for (int i = 0; i < tc; ++i) extract(ext, watermarked[static_cast<std::size_t>(i)]);
      auto t3 = clock::now();
      t_vanilla.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      t_wm.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());
      t_extract.push_back(std::chrono::duration<double, std::milli>(t3 - t2).count());
    }
    const double mv = detail::median(t_vanilla);
    const double mw = detail::median(t_wm);
    report["timing"] = {{"runs", cfg.timing_runs},
                        {"clips_per_run", tc},
                        {"vanilla_decode_ms", mv},
                        {"watermarked_decode_ms", mw},
                        {"t_i_ms", mw - mv},
                        {"t_i_relative", (mw - mv) / mv},
                        {"t_e_ms", detail::median(t_extract)}};
  }

  EvaluateResult res;
  res.report = report;
  res.benign_bit_accuracy = benign.mean_bit_accuracy;
  res.psnr_db = mean_psnr / n;
  return res;
}

inline int cmd_evaluate(const PipelineConfig& cfg) {
  auto res = evaluate_pipeline(cfg);
  detail::write_report(cfg.reports() / "evaluate_report.json", res.report);

  const auto& r = res.report;
  std::printf("== benign ==\n  bit accuracy  %.4f\n", r["benign"]["bit_accuracy"].get<double>());
  for (auto& [fpr, tpr] : r["benign"]["tpr"].items())
    std::printf("  TPR@%s      %.4f\n", fpr.c_str(), tpr.get<double>());
  std::printf("== quality (watermarked vs vanilla) ==\n");
  std::printf("  PSNR  %.3f dB\n  SSIM  %.4f\n  tLP   %.6f  (LP: substitute metric)\n",
              r["quality"]["psnr_db"].get<double>(), r["quality"]["ssim"].get<double>(),
              r["quality"]["tlp"].get<double>());
  std::printf("== robustness (bit accuracy / TPR@%g) ==\n",
              cfg.detection.fpr_target);
  if (r.contains("attacks"))
    for (auto& [name, row] : r["attacks"].items())
      std::printf("  %-28s %.4f / %.4f\n", name.c_str(), row["bit_accuracy"].get<double>(),
                  row["tpr"].get<double>());
  std::printf("== null calibration ==\n  %d/%d false positives (95%% bound %d)\n",
              r["null_calibration"]["false_positives"].get<int>(),
              r["null_calibration"]["trials"].get<int>(),
              r["null_calibration"]["ci95_upper_count"].get<int>());
  std::printf("== timing ==\n  T_i %.3f ms (%.2f%% of vanilla)   T_e %.3f ms\n",
              r["timing"]["t_i_ms"].get<double>(),
              100.0 * r["timing"]["t_i_relative"].get<double>(),
              r["timing"]["t_e_ms"].get<double>());
  return kOk;
}

// Maps thrown errors onto the exit-code contract.
template <typename Fn>
int run_guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const KeyLengthError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kKeyMismatch;
  } catch (const MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMissingArtifact;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
}

}  // namespace vidsig::cli
