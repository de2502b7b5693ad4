#pragma once

// Selective fine-tuning of the latent decoder. Training aligns the
// watermarked decoder against reconstruction pairs: the frozen original
// decoder provides the reference output for the same latent, and the
// extractor provides the watermark pressure. Only layers left unfrozen by
// the sensitivity search receive updates.

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidsig/errors.hpp"
#include "vidsig/losses.hpp"
#include "vidsig/metrics.hpp"
#include "vidsig/model.hpp"
#include "vidsig/nn.hpp"
#include "vidsig/pas.hpp"
#include "vidsig/rng.hpp"

namespace vidsig {

struct TrainConfig {
  WatermarkMessage message;
  int total_steps = 600;      // T_t
  int warmup_steps = -1;      // T_w; -1 -> 20% of T_t
  double lr_base = 5e-4;      // lr_b
  double lr_min = 1e-6;       // lr_m
  int batch_clips = 2;
  double weight_decay = 0.0;
  LossWeights weights;
  MetricKind metric = MetricKind::Mse;
  std::uint64_t seed = 0;

  int resolved_warmup() const {
    return warmup_steps >= 0 ? warmup_steps
                             : static_cast<int>(std::lround(0.2 * total_steps));
  }

  void validate() const {
    if (message.k() < 1) throw ConfigError("train: watermark message is empty");
    if (total_steps < 1) throw ConfigError("train: total_steps must be >= 1");
    const int tw = resolved_warmup();
    if (tw < 0 || tw > total_steps) throw ConfigError("train: need 0 <= T_w <= T_t");
    if (lr_min > lr_base) throw ConfigError("train: lr_min must be <= lr_base");
    if (batch_clips < 1) throw ConfigError("train: batch_clips must be >= 1");
    weights.validate();
  }
};

// Linear warmup to lr_b over T_w steps, then half-cycle cosine decay to
// lr_m at T_t; past T_t the rate stays at lr_m. Endpoints are returned
// exactly rather than through the cosine expression.
inline double lr_schedule(long t, const TrainConfig& cfg) {
  const long tw = cfg.resolved_warmup();
  const long tt = cfg.total_steps;
  if (t < 0) throw ConfigError("lr_schedule: negative step");
  if (t < tw) return (static_cast<double>(t) / static_cast<double>(tw)) * cfg.lr_base;
  if (t == tw) return cfg.lr_base;
  if (t >= tt) return cfg.lr_min;
  const double phase = 3.14159265358979323846 * static_cast<double>(t - tw) /
                       static_cast<double>(tt - tw);
  const double c = 0.5 * (1.0 + std::cos(phase));  // g(t)/2
  return cfg.lr_min * (1.0 - c) + cfg.lr_base * c;
}

// One clip's objective and its gradients, accumulated into the decoder's
// parameter grads (scaled by `scale`). This is the unit the fine-tune loop
// repeats; it is factored out so the full decoder->extractor->loss chain
// can be checked against finite differences in double precision.
template <typename T>
struct ClipLoss {
  T l_fr = 0, l_v = 0, l_wm = 0, l_spatial = 0, l_temporal = 0;
  T total = 0;
  SoftMessageT<T> soft;
};

template <typename T>
ClipLoss<T> clip_loss_and_grads(DecoderT<T>& dec, ExtractorT<T>& ext, const Tensor4<T>& z,
                                const Tensor4<T>& ref, const WatermarkMessage& m,
                                const LossWeights& w, MetricKind kind, T scale,
                                bool with_grads = true) {
  std::vector<Tensor4<T>> dec_acts, ext_acts;
  Tensor4<T> out = dec.net.forward_cached(z, dec_acts);
  Tensor4<T> probs_t = ext.net.forward_cached(out, ext_acts);
  ClipLoss<T> r;
  r.soft = SoftMessageT<T>(out.n, ext.k);
  for (int t = 0; t < out.n; ++t)
    for (int i = 0; i < ext.k; ++i) r.soft.at(t, i) = probs_t.at(t, i, 0, 0);

  SoftMessageT<T> gsoft(out.n, ext.k, T(0));
  r.l_fr = frame_watermark_loss(r.soft, m);
  r.l_v = video_watermark_loss(r.soft, m);
  r.l_wm = watermark_loss(r.soft, m, w, with_grads ? &gsoft : nullptr);
  Tensor4<T> gvid(out.n, out.c, out.h, out.w, T(0));
  r.l_spatial = spatial_loss(out, ref, kind, with_grads ? &gvid : nullptr);
  Tensor4<T> gtmp(out.n, out.c, out.h, out.w, T(0));
  r.l_temporal =
      out.n >= 2 ? temporal_loss(out, ref, kind, with_grads ? &gtmp : nullptr) : T(0);
  r.total = static_cast<T>(total_loss(static_cast<double>(r.l_wm), static_cast<double>(r.l_spatial),
                                      static_cast<double>(r.l_temporal), w));
  if (!with_grads) return r;

  Tensor4<T> g_probs(out.n, ext.k, 1, 1);
  for (int t = 0; t < out.n; ++t)
    for (int i = 0; i < ext.k; ++i)
      g_probs.at(t, i, 0, 0) = static_cast<T>(w.lambda1) * gsoft.at(t, i) * scale;
  Tensor4<T> g_out = ext.net.backward(ext_acts, g_probs);
  for (std::size_t e = 0; e < g_out.v.size(); ++e)
    g_out.v[e] += scale * (static_cast<T>(w.lambda2) * gvid.v[e] +
                           static_cast<T>(w.lambda3) * gtmp.v[e]);
  dec.net.backward(dec_acts, g_out);
  return r;
}

struct TrainStepRecord {
  long step = 0;
  double lr = 0;
  double l_fr = 0, l_v = 0, l_wm = 0, l_spatial = 0, l_temporal = 0, total = 0;
  double probe_bit_accuracy = 0;

  nlohmann::json to_json() const {
    return {{"step", step},          {"lr", lr},           {"l_fr", l_fr},
            {"l_v", l_v},            {"l_wm", l_wm},       {"l_spatial", l_spatial},
            {"l_temporal", l_temporal}, {"total", total},  {"bit_acc", probe_bit_accuracy}};
  }
};

struct TrainLog {
  std::vector<TrainStepRecord> steps;
  double final_bit_accuracy = 0;
  double final_total_loss = 0;

  void write_jsonl(std::ostream& os) const {
    for (const auto& r : steps) os << r.to_json().dump() << "\n";
    os << nlohmann::json({{"summary", true},
                          {"final_bit_acc", final_bit_accuracy},
                          {"final_total_loss", final_total_loss}})
              .dump()
       << "\n";
  }
};

// Fine-tune the decoder against its own frozen copy. pas_report supplies
// the freeze mask; an empty selection refuses to train. On a non-finite
// loss the last finite-step parameters are restored before the error is
// raised.
inline std::pair<LatentDecoder, TrainLog> finetune(const LatentDecoder& dec,
                                                   const LatentEncoder& enc,
                                                   const WatermarkExtractor& extractor,
                                                   const std::vector<VideoTensor>& dataset,
                                                   const TrainConfig& cfg,
                                                   const LayerSensitivityReport& pas_report) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("finetune: empty dataset");
  if (cfg.message.k() != extractor.k)
    throw KeyLengthError("finetune: message length does not match extractor k");
  if (pas_report.selected.empty())
    throw ConfigError("finetune: PAS selected no layers; refusing to train");

  LatentDecoder tuned = dec;  // deep copy; `dec` stays the frozen reference
  apply_freeze_mask(tuned, pas_report);

  // Cache latents and reference reconstructions once.
  std::vector<LatentTensor> latents;
  std::vector<VideoTensor> refs;
  latents.reserve(dataset.size());
  refs.reserve(dataset.size());
  for (const auto& clip : dataset) {
    latents.push_back(encode(enc, clip));
    refs.push_back(decode(dec, latents.back()));
  }

  // The extractor is used frozen: backward only propagates input grads.
  WatermarkExtractor ext = extractor;
  ext.net.freeze_all(true);

  nn::AdamW<float> opt;
  opt.weight_decay = cfg.weight_decay;
  auto trainable = tuned.net.trainable_params();

  TrainLog log;
  Rng batcher = Rng(cfg.seed).fork("finetune-batches");
  auto last_good = nn::snapshot_params(tuned.net);

  for (long step = 0; step < cfg.total_steps; ++step) {
    TrainStepRecord rec;
    rec.step = step;
    rec.lr = lr_schedule(step, cfg);
    tuned.net.zero_grads();

    double bit_hits = 0, bit_total = 0;
    const float scale = 1.0f / static_cast<float>(cfg.batch_clips);
    for (int b = 0; b < cfg.batch_clips; ++b) {
      const std::size_t idx = batcher.below(latents.size());
      ClipLoss<float> cl = clip_loss_and_grads(tuned, ext, latents[idx], refs[idx], cfg.message,
                                               cfg.weights, cfg.metric, scale);
      if (!std::isfinite(cl.total)) {
        nn::restore_params(tuned.net, last_good);
        throw TrainingError("finetune: non-finite loss at step " + std::to_string(step) +
                            "; parameters restored to last finite step");
      }
      rec.l_fr += cl.l_fr * scale;
      rec.l_v += cl.l_v * scale;
      rec.l_wm += cl.l_wm * scale;
      rec.l_spatial += cl.l_spatial * scale;
      rec.l_temporal += cl.l_temporal * scale;
      rec.total += cl.total * scale;
      for (int t = 0; t < cl.soft.frames; ++t)
        for (int i = 0; i < ext.k; ++i) {
          bit_hits += (cl.soft.at(t, i) > 0.5f ? 1 : 0) == cfg.message.bits[i];
          bit_total += 1;
        }
    }

    opt.step(trainable, rec.lr);
    last_good = nn::snapshot_params(tuned.net);
    rec.probe_bit_accuracy = bit_hits / bit_total;
    log.steps.push_back(rec);
  }

  if (!log.steps.empty()) {
    log.final_bit_accuracy = log.steps.back().probe_bit_accuracy;
    log.final_total_loss = log.steps.back().total;
  }
  return {std::move(tuned), std::move(log)};
}

}  // namespace vidsig
