#pragma once

// Models: a frozen per-frame latent encoder, a fine-tunable latent decoder
// with named layers and a freeze mask, and a per-frame watermark extractor.
// The decoder applies 2D convolutions frame by frame (2D-VAE style), which
// is what makes the temporal alignment loss meaningful. A HiDDeN-style
// residual embedder exists only inside extractor pretraining and is
// discarded once the extractor is frozen.

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vidsig/container.hpp"
#include "vidsig/detection.hpp"
#include "vidsig/errors.hpp"
#include "vidsig/losses.hpp"
#include "vidsig/metrics.hpp"
#include "vidsig/nn.hpp"
#include "vidsig/rng.hpp"
#include "vidsig/tamper.hpp"
#include "vidsig/tensor.hpp"

namespace vidsig {

struct ModelSpec {
  int image_channels = 3;
  int latent_channels = 8;
  int enc_ch1 = 16, enc_ch2 = 24;
  int dec_ch1 = 24, dec_ch2 = 16;
  int ext_ch1 = 32, ext_ch2 = 64, ext_ch3 = 64;
  int emb_ch = 64;
  int k = 48;

  nlohmann::json to_json() const {
    return {{"image_channels", image_channels}, {"latent_channels", latent_channels},
            {"enc_ch1", enc_ch1},               {"enc_ch2", enc_ch2},
            {"dec_ch1", dec_ch1},               {"dec_ch2", dec_ch2},
            {"ext_ch1", ext_ch1},               {"ext_ch2", ext_ch2},
            {"ext_ch3", ext_ch3},               {"emb_ch", emb_ch},
            {"k", k}};
  }

  static ModelSpec from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.image_channels = j.value("image_channels", s.image_channels);
    s.latent_channels = j.value("latent_channels", s.latent_channels);
    s.enc_ch1 = j.value("enc_ch1", s.enc_ch1);
    s.enc_ch2 = j.value("enc_ch2", s.enc_ch2);
    s.dec_ch1 = j.value("dec_ch1", s.dec_ch1);
    s.dec_ch2 = j.value("dec_ch2", s.dec_ch2);
    s.ext_ch1 = j.value("ext_ch1", s.ext_ch1);
    s.ext_ch2 = j.value("ext_ch2", s.ext_ch2);
    s.ext_ch3 = j.value("ext_ch3", s.ext_ch3);
    s.emb_ch = j.value("emb_ch", s.emb_ch);
    s.k = j.value("k", s.k);
    return s;
  }
};

template <typename T>
struct EncoderT {
  ModelSpec spec;
  nn::Sequential<T> net;
};

template <typename T>
struct DecoderT {
  ModelSpec spec;
  nn::Sequential<T> net;
};

template <typename T>
struct ExtractorT {
  ModelSpec spec;
  nn::Sequential<T> net;
  int k = 0;
};

using LatentEncoder = EncoderT<float>;
using LatentDecoder = DecoderT<float>;
using WatermarkExtractor = ExtractorT<float>;

// ---------------------------------------------------------------------------
// Builders

template <typename T = float>
EncoderT<T> make_encoder(const ModelSpec& spec, Rng rng) {
  EncoderT<T> e;
  e.spec = spec;
  e.net.add(nn::Conv2d<T>("down1", spec.image_channels, spec.enc_ch1, 3, 2, 1))->init(rng);
  e.net.add(nn::LeakyReLU<T>(0.1));
  e.net.add(nn::Conv2d<T>("down2", spec.enc_ch1, spec.enc_ch2, 3, 2, 1))->init(rng);
  e.net.add(nn::LeakyReLU<T>(0.1));
  e.net.add(nn::Conv2d<T>("to_latent", spec.enc_ch2, spec.latent_channels, 3, 1, 1))->init(rng);
  return e;
}

// Five named layers: up1, mid, up2, refine, out. Each upsampling stage is
// nearest-neighbor followed by a 3x3 conv; Sigmoid on the last layer keeps
// decoded pixels in [0,1].
template <typename T = float>
DecoderT<T> make_decoder(const ModelSpec& spec, Rng rng) {
  DecoderT<T> d;
  d.spec = spec;
  d.net.add(nn::NearestUpsample2x<T>());
  d.net.add(nn::Conv2d<T>("up1", spec.latent_channels, spec.dec_ch1, 3, 1, 1))->init(rng);
  d.net.add(nn::LeakyReLU<T>(0.1));
  d.net.add(nn::Conv2d<T>("mid", spec.dec_ch1, spec.dec_ch1, 3, 1, 1))->init(rng);
  d.net.add(nn::LeakyReLU<T>(0.1));
  d.net.add(nn::NearestUpsample2x<T>());
  d.net.add(nn::Conv2d<T>("up2", spec.dec_ch1, spec.dec_ch2, 3, 1, 1))->init(rng);
  d.net.add(nn::LeakyReLU<T>(0.1));
  d.net.add(nn::Conv2d<T>("refine", spec.dec_ch2, spec.dec_ch2, 3, 1, 1))->init(rng);
  d.net.add(nn::LeakyReLU<T>(0.1));
  d.net.add(nn::Conv2d<T>("out", spec.dec_ch2, spec.image_channels, 3, 1, 1))->init(rng);
  d.net.add(nn::Sigmoid<T>());
  return d;
}

// Strided conv stack, a per-bit evidence conv (one channel per message
// bit), global average pooling, and a linear mixing head. Pooling over
// per-bit channels keeps the extractor resolution-agnostic and lets each
// bit accumulate spatial evidence independently.
template <typename T = float>
ExtractorT<T> make_extractor(const ModelSpec& spec, Rng rng) {
  ExtractorT<T> x;
  x.spec = spec;
  x.k = spec.k;
  x.net.add(nn::Conv2d<T>("f1", spec.image_channels, spec.ext_ch1, 3, 2, 1))->init(rng);
  x.net.add(nn::LeakyReLU<T>(0.1));
  x.net.add(nn::Conv2d<T>("f2", spec.ext_ch1, spec.ext_ch2, 3, 2, 1))->init(rng);
  x.net.add(nn::LeakyReLU<T>(0.1));
  x.net.add(nn::Conv2d<T>("f3", spec.ext_ch2, spec.ext_ch3, 3, 2, 1))->init(rng);
  x.net.add(nn::LeakyReLU<T>(0.1));
  x.net.add(nn::Conv2d<T>("bits", spec.ext_ch3, spec.k, 3, 1, 1))->init(rng);
  x.net.add(nn::GlobalAvgPool<T>());
  x.net.add(nn::Linear<T>("head", spec.k, spec.k))->init(rng);
  x.net.add(nn::Sigmoid<T>());
  return x;
}

template <typename To, typename From>
void copy_params_cast(nn::Sequential<From>& src, nn::Sequential<To>& dst) {
  auto sp = src.params();
  auto dp = dst.params();
  if (sp.size() != dp.size()) throw ShapeError("copy_params_cast: parameter count mismatch");
  for (std::size_t i = 0; i < sp.size(); ++i) {
    if (sp[i]->name != dp[i]->name || sp[i]->value.v.size() != dp[i]->value.v.size())
      throw ShapeError("copy_params_cast: mismatch at " + sp[i]->name);
    for (std::size_t e = 0; e < sp[i]->value.v.size(); ++e)
      dp[i]->value.v[e] = static_cast<To>(sp[i]->value.v[e]);
  }
}

// ---------------------------------------------------------------------------
// Core ops

template <typename T>
Tensor4<T> encode(const EncoderT<T>& enc, const Tensor4<T>& v) {
  if (v.c != enc.spec.image_channels)
    throw ShapeError("encode: expected " + std::to_string(enc.spec.image_channels) +
                     " channels, got " + std::to_string(v.c));
  if (v.h % 4 != 0 || v.w % 4 != 0) throw ShapeError("encode: H and W must be multiples of 4");
  return enc.net.forward(v);
}

template <typename T>
Tensor4<T> decode(const DecoderT<T>& dec, const Tensor4<T>& z) {
  if (z.c != dec.spec.latent_channels)
    throw ShapeError("decode: expected " + std::to_string(dec.spec.latent_channels) +
                     " latent channels, got " + std::to_string(z.c));
  return dec.net.forward(z);
}

template <typename T>
SoftMessageT<T> extract(const ExtractorT<T>& ex, const Tensor4<T>& v) {
  if (v.c != ex.spec.image_channels) throw ShapeError("extract: channel mismatch");
  Tensor4<T> out = ex.net.forward(v);
  SoftMessageT<T> soft(v.n, ex.k);
  for (int t = 0; t < v.n; ++t)
    for (int i = 0; i < ex.k; ++i) soft.at(t, i) = out.at(t, i, 0, 0);
  return soft;
}

// ---------------------------------------------------------------------------
// Checkpoints: directory of one .vst per parameter block plus manifest.json
// (layer names, shapes, freeze mask, training metadata). Round trips are
// bit-exact.

inline void save_checkpoint(const std::string& dir, const std::string& kind,
                            nn::Sequential<float>& net, const ModelSpec& spec, long step,
                            std::uint64_t seed, const std::string& config_hash,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["kind"] = kind;
  manifest["model_spec"] = spec.to_json();
  manifest["step"] = step;
  manifest["seed"] = seed;
  manifest["config_hash"] = config_hash;
  manifest["extra"] = extra;
  auto layers = nlohmann::json::array();
  for (auto* layer : net.param_layers()) {
    nlohmann::json lj;
    lj["name"] = layer->name();
    lj["frozen"] = layer->frozen;
    auto params = nlohmann::json::array();
    for (auto* p : layer->params()) {
      const std::string file = p->name + ".vst";
      save_tensor(p->value, (fs::path(dir) / file).string());
      params.push_back({{"name", p->name},
                        {"file", file},
                        {"dims", {p->value.n, p->value.c, p->value.h, p->value.w}}});
    }
    lj["params"] = params;
    layers.push_back(lj);
  }
  manifest["layers"] = layers;
  std::ofstream os(fs::path(dir) / "manifest.json");
  if (!os) throw IoError("cannot write checkpoint manifest under " + dir);
  os << manifest.dump(2) << "\n";
}

struct CheckpointInfo {
  std::string kind;
  ModelSpec spec;
  long step = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  nlohmann::json extra;
};

inline CheckpointInfo read_checkpoint_manifest(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto path = fs::path(dir) / "manifest.json";
  std::ifstream is(path);
  if (!is) throw MissingArtifactError("checkpoint manifest not found: " + path.string());
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint manifest " + path.string() + ": " + e.what());
  }
  CheckpointInfo info;
  info.kind = manifest.at("kind").get<std::string>();
  info.spec = ModelSpec::from_json(manifest.at("model_spec"));
  info.step = manifest.value("step", 0L);
  info.seed = manifest.value("seed", std::uint64_t{0});
  info.config_hash = manifest.value("config_hash", "");
  info.extra = manifest.value("extra", nlohmann::json::object());
  return info;
}

inline void load_checkpoint_params(const std::string& dir, nn::Sequential<float>& net) {
  namespace fs = std::filesystem;
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw MissingArtifactError("checkpoint manifest not found under " + dir);
  nlohmann::json manifest;
  is >> manifest;
  for (const auto& lj : manifest.at("layers")) {
    auto* layer = net.layer_by_name(lj.at("name").get<std::string>());
    if (!layer) throw IoError("checkpoint layer not in model: " + lj.at("name").get<std::string>());
    layer->frozen = lj.value("frozen", false);
    auto params = layer->params();
    std::size_t idx = 0;
    for (const auto& pj : lj.at("params")) {
      if (idx >= params.size()) throw IoError("checkpoint has extra params for layer " + layer->name());
      auto* p = params[idx++];
      if (p->name != pj.at("name").get<std::string>())
        throw IoError("checkpoint param order mismatch at " + p->name);
      Tensor4<float> t = load_tensor((fs::path(dir) / pj.at("file").get<std::string>()).string());
      if (!t.same_shape(p->value))
        throw IoError("checkpoint shape mismatch at " + p->name + ": " + t.shape_str() + " vs " +
                      p->value.shape_str());
      p->value = std::move(t);
    }
  }
}

inline std::pair<LatentEncoder, CheckpointInfo> load_encoder(const std::string& dir) {
  auto info = read_checkpoint_manifest(dir);
  if (info.kind != "encoder") throw IoError("checkpoint at " + dir + " is not an encoder");
  LatentEncoder e = make_encoder<float>(info.spec, Rng(0));
  load_checkpoint_params(dir, e.net);
  e.net.freeze_all(true);  // encoders never train after load
  return {std::move(e), std::move(info)};
}

inline std::pair<LatentDecoder, CheckpointInfo> load_decoder(const std::string& dir) {
  auto info = read_checkpoint_manifest(dir);
  if (info.kind != "decoder") throw IoError("checkpoint at " + dir + " is not a decoder");
  LatentDecoder d = make_decoder<float>(info.spec, Rng(0));
  load_checkpoint_params(dir, d.net);
  return {std::move(d), std::move(info)};
}

inline std::pair<WatermarkExtractor, CheckpointInfo> load_extractor(const std::string& dir) {
  auto info = read_checkpoint_manifest(dir);
  if (info.kind != "extractor") throw IoError("checkpoint at " + dir + " is not an extractor");
  WatermarkExtractor x = make_extractor<float>(info.spec, Rng(0));
  load_checkpoint_params(dir, x.net);
  x.net.freeze_all(true);
  return {std::move(x), std::move(info)};
}

// ---------------------------------------------------------------------------
// Autoencoder pretraining (stands in for published VAE weights)

struct AutoencoderPretrainConfig {
  int steps = 2500;
  int batch_frames = 12;
  double lr = 2e-3;
  double lr_min = 2e-4;  // half-cycle cosine decay endpoint
  double target_psnr_db = 28.0;
  double early_stop_margin_db = 0.75;
  int eval_every = 100;
  ModelSpec model;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  double holdout_psnr_db = 0;
  double holdout_bit_accuracy = 0;
  int steps_run = 0;
  std::vector<double> loss_curve;
  std::vector<std::pair<int, double>> eval_trace;  // (step, holdout metric)
};

namespace detail {

template <typename T>
Tensor4<T> stack_random_frames(const std::vector<VideoTensor>& clips, int count, Rng& rng) {
  const auto& probe = clips.front();
  Tensor4<T> batch(count, probe.c, probe.h, probe.w);
  for (int i = 0; i < count; ++i) {
    const auto& clip = clips[rng.below(clips.size())];
    const int t = static_cast<int>(rng.below(static_cast<std::uint64_t>(clip.n)));
    const std::size_t fsz = static_cast<std::size_t>(clip.c) * clip.h * clip.w;
    for (std::size_t e = 0; e < fsz; ++e)
      batch.v[i * fsz + e] = static_cast<T>(clip.v[t * fsz + e]);
  }
  return batch;
}

}  // namespace detail

inline std::pair<std::pair<LatentEncoder, LatentDecoder>, PretrainResult> pretrain_autoencoder(
    const AutoencoderPretrainConfig& cfg, const std::vector<VideoTensor>& train_clips,
    const std::vector<VideoTensor>& holdout_clips) {
  if (train_clips.empty() || holdout_clips.empty())
    throw ConfigError("pretrain_autoencoder: dataset must not be empty");
  Rng root(cfg.seed);
  LatentEncoder enc = make_encoder<float>(cfg.model, root.fork("enc-init"));
  LatentDecoder dec = make_decoder<float>(cfg.model, root.fork("dec-init"));
  nn::AdamW<float> opt;
  auto params = enc.net.params();
  for (auto* p : dec.net.params()) params.push_back(p);

  auto holdout_psnr = [&] {
    double acc = 0;
    for (const auto& clip : holdout_clips) {
      auto z = encode(enc, clip);
      auto recon = decode(dec, z);
      acc += psnr(recon, clip);
    }
    return acc / holdout_clips.size();
  };

  PretrainResult res;
  Rng batcher = root.fork("ae-batches");
  std::vector<Tensor4<float>> enc_acts, dec_acts;
  for (int step = 0; step < cfg.steps; ++step) {
    auto x = detail::stack_random_frames<float>(train_clips, cfg.batch_frames, batcher);
    auto z = enc.net.forward_cached(x, enc_acts);
    auto recon = dec.net.forward_cached(z, dec_acts);
    Tensor4<float> g(recon.n, recon.c, recon.h, recon.w, 0.0f);
    const float loss = metric_distance(MetricKind::Mse, recon, x, &g);
    if (!std::isfinite(loss))
      throw TrainingError("pretrain_autoencoder: non-finite loss at step " + std::to_string(step));
    res.loss_curve.push_back(loss);
    enc.net.zero_grads();
    dec.net.zero_grads();
    auto gz = dec.net.backward(dec_acts, g);
    enc.net.backward(enc_acts, gz);
    const double c = 0.5 * (1.0 + std::cos(3.14159265358979323846 * step / cfg.steps));
    opt.step(params, cfg.lr_min * (1.0 - c) + cfg.lr * c);
    res.steps_run = step + 1;
    if ((step + 1) % cfg.eval_every == 0) {
      const double p = holdout_psnr();
      res.eval_trace.emplace_back(step + 1, p);
      if (p >= cfg.target_psnr_db + cfg.early_stop_margin_db) break;
    }
  }
  res.holdout_psnr_db = holdout_psnr();
  enc.net.freeze_all(true);  // encoder is permanently frozen from here on
  return {{std::move(enc), std::move(dec)}, res};
}

// ---------------------------------------------------------------------------
// Extractor pretraining: joint residual-embedder/extractor training on
// single frames; only the extractor survives. The augmentation recipe
// (noise / blur / crop-resize, straight-through gradients) hardens the
// extractor against the spatial attack grid; it is a documented choice.

struct ExtractorPretrainConfig {
  int steps = 1500;
  int batch = 8;
  double lr = 1.5e-3;
  double lambda_img = 1.5;
  // The image-closeness term stays off for this fraction of the run so the
  // bit code can form at full residual amplitude first.
  double lambda_img_delay_fraction = 0.5;
  double residual_init_scale = 1.0;
  bool augment = true;
  double target_bit_acc = 0.98;
  double early_stop_margin = 0.005;
  int eval_every = 100;
  ModelSpec model;
  std::uint64_t seed = 0;
};

template <typename T>
struct EmbedderT {
  ModelSpec spec;
  nn::Sequential<T> trunk;  // (image ++ k message planes) -> residual
};

// Each message bit enters as its own broadcast plane; a 1x1 mixer folds the
// planes into the image features before two 3x3 stages emit the residual.
// The trunk runs at half resolution (2x average pool in, nearest upsample
// out), which keeps the wide layers affordable and the residual low
// frequency.
template <typename T = float>
EmbedderT<T> make_embedder(const ModelSpec& spec, Rng rng, double residual_init_scale = 1.0) {
  EmbedderT<T> e;
  e.spec = spec;
  const int cat = spec.image_channels + spec.k;
  e.trunk.add(nn::Conv2d<T>("e1", cat, spec.emb_ch, 1, 1, 0))->init(rng);
  e.trunk.add(nn::LeakyReLU<T>(0.1));
  e.trunk.add(nn::Conv2d<T>("e2", spec.emb_ch, spec.emb_ch, 3, 1, 1))->init(rng);
  e.trunk.add(nn::LeakyReLU<T>(0.1));
  auto* last = e.trunk.add(nn::Conv2d<T>("e3", spec.emb_ch, spec.image_channels, 3, 1, 1));
  last->init(rng);
  for (auto& w : last->w_.value.v) w *= static_cast<T>(residual_init_scale);
  return e;
}

template <typename T>
struct EmbedderWork {
  std::vector<Tensor4<T>> trunk_acts;
  Tensor4<T> img, cat;
};

namespace detail {

template <typename T>
Tensor4<T> avgpool2x(const Tensor4<T>& x) {
  const int ph = x.h / 2, pw = x.w / 2;
  Tensor4<T> y(x.n, x.c, ph, pw);
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c) {
      const T* in = x.plane(i, c);
      T* out = y.plane(i, c);
      for (int yy = 0; yy < ph; ++yy)
        for (int xx = 0; xx < pw; ++xx) {
          const T* p0 = in + static_cast<std::size_t>(2 * yy) * x.w + 2 * xx;
          const T* p1 = p0 + x.w;
          out[static_cast<std::size_t>(yy) * pw + xx] =
              (p0[0] + p0[1] + p1[0] + p1[1]) * T(0.25);
        }
    }
  return y;
}

template <typename T>
void upsample2x_add(const Tensor4<T>& low, Tensor4<T>& out) {
  for (int i = 0; i < low.n; ++i)
    for (int c = 0; c < low.c; ++c) {
      const T* in = low.plane(i, c);
      T* dst = out.plane(i, c);
      for (int yy = 0; yy < low.h; ++yy)
        for (int xx = 0; xx < low.w; ++xx) {
          const T v = in[static_cast<std::size_t>(yy) * low.w + xx];
          T* d0 = dst + static_cast<std::size_t>(2 * yy) * out.w + 2 * xx;
          T* d1 = d0 + out.w;
          d0[0] += v;
          d0[1] += v;
          d1[0] += v;
          d1[1] += v;
        }
    }
}

template <typename T>
Tensor4<T> downsample_grad2x(const Tensor4<T>& g, int lh, int lw) {
  Tensor4<T> out(g.n, g.c, lh, lw);
  for (int i = 0; i < g.n; ++i)
    for (int c = 0; c < g.c; ++c) {
      const T* in = g.plane(i, c);
      T* dst = out.plane(i, c);
      for (int yy = 0; yy < lh; ++yy)
        for (int xx = 0; xx < lw; ++xx) {
          const T* p0 = in + static_cast<std::size_t>(2 * yy) * g.w + 2 * xx;
          const T* p1 = p0 + g.w;
          dst[static_cast<std::size_t>(yy) * lw + xx] = p0[0] + p0[1] + p1[0] + p1[1];
        }
    }
  return out;
}

}  // namespace detail

template <typename T>
Tensor4<T> embed_forward(const EmbedderT<T>& emb, const Tensor4<T>& img,
                         const std::vector<WatermarkMessage>& msgs, EmbedderWork<T>& wk) {
  const int n = img.n, k = emb.spec.k;
  if (static_cast<int>(msgs.size()) != n) throw ShapeError("embed: message count mismatch");
  if (img.h % 2 || img.w % 2) throw ShapeError("embed: image dims must be even");
  wk.img = img;
  Tensor4<T> low = detail::avgpool2x(img);
  wk.cat = Tensor4<T>(n, img.c + k, low.h, low.w);
  const std::size_t plane = static_cast<std::size_t>(low.h) * low.w;
  for (int i = 0; i < n; ++i) {
    if (msgs[static_cast<std::size_t>(i)].k() != k) throw KeyLengthError("embed: message length mismatch");
    for (int c = 0; c < img.c; ++c)
      std::copy_n(low.plane(i, c), plane, wk.cat.plane(i, c));
    for (int b = 0; b < k; ++b)
      std::fill_n(wk.cat.plane(i, img.c + b), plane,
                  msgs[static_cast<std::size_t>(i)].bits[b] ? T(1) : T(-1));
  }
  Tensor4<T> res = emb.trunk.forward_cached(wk.cat, wk.trunk_acts);
  Tensor4<T> out = img;
  detail::upsample2x_add(res, out);
  return out;
}

// Accumulates embedder parameter grads from d(watermarked image).
template <typename T>
void embed_backward(EmbedderT<T>& emb, EmbedderWork<T>& wk, const Tensor4<T>& d_out) {
  Tensor4<T> d_res = detail::downsample_grad2x(d_out, wk.cat.h, wk.cat.w);
  emb.trunk.backward(wk.trunk_acts, d_res);
}

inline std::pair<WatermarkExtractor, PretrainResult> pretrain_watermark_extractor(
    const ExtractorPretrainConfig& cfg, const std::vector<VideoTensor>& train_images,
    const std::vector<VideoTensor>& holdout_images) {
  if (cfg.model.k < 1) throw ConfigError("pretrain_watermark_extractor: k must be >= 1");
  if (train_images.empty() || holdout_images.empty())
    throw ConfigError("pretrain_watermark_extractor: dataset must not be empty");
  Rng root(cfg.seed);
  WatermarkExtractor ext = make_extractor<float>(cfg.model, root.fork("ext-init"));
  EmbedderT<float> emb =
      make_embedder<float>(cfg.model, root.fork("emb-init"), cfg.residual_init_scale);
  nn::AdamW<float> opt;
  auto params = ext.net.params();
  for (auto* p : emb.trunk.params()) params.push_back(p);

  auto holdout_bit_acc = [&](Rng rng) {
    long hits = 0, total = 0;
    EmbedderWork<float> wk;
    for (const auto& img : holdout_images) {
      auto m = WatermarkMessage::random(cfg.model.k, rng);
      auto xw = embed_forward(emb, img, std::vector<WatermarkMessage>(img.n, m), wk);
      xw.clamp01();
      auto soft = extract(ext, xw);
      for (int t = 0; t < soft.frames; ++t)
        for (int i = 0; i < cfg.model.k; ++i) {
          hits += (soft.at(t, i) > 0.5f ? 1 : 0) == m.bits[i];
          ++total;
        }
    }
    return static_cast<double>(hits) / total;
  };

  PretrainResult res;
  Rng batcher = root.fork("ext-batches");
  Rng keyrng = root.fork("ext-messages");
  Rng augrng = root.fork("ext-augment");
  LossWeights bce_only;  // only the frame term is used here
  std::vector<Tensor4<float>> ext_acts;
  EmbedderWork<float> wk;
  for (int step = 0; step < cfg.steps; ++step) {
    auto img = detail::stack_random_frames<float>(train_images, cfg.batch, batcher);
    std::vector<WatermarkMessage> msgs;
    for (int i = 0; i < cfg.batch; ++i) msgs.push_back(WatermarkMessage::random(cfg.model.k, keyrng));
    auto xw = embed_forward(emb, img, msgs, wk);

    // Robustness augmentation with straight-through gradients.
    Tensor4<float> xin = xw;
    if (cfg.augment) {
      switch (step % 4) {
        case 1: xin = gaussian_noise(xw, augrng.uniform(0.005, 0.05), augrng.next_u64()); break;
        case 2: {
          const double s = augrng.uniform(0.4, 1.0);
          xin = gaussian_blur(xw, default_blur_ksize(s), s);
          break;
        }
        case 3: xin = crop_resize(xw, augrng.uniform(0.8, 1.0)); break;
        default: break;
      }
    }

    auto probs_t = ext.net.forward_cached(xin, ext_acts);
    SoftMessageT<float> soft(cfg.batch, cfg.model.k);
    for (int i = 0; i < cfg.batch; ++i)
      for (int b = 0; b < cfg.model.k; ++b) soft.at(i, b) = probs_t.at(i, b, 0, 0);

    // Per-image BCE (frame loss over the batch) + image closeness.
    float loss = 0;
    SoftMessageT<float> gsoft(cfg.batch, cfg.model.k, 0.0f);
    for (int i = 0; i < cfg.batch; ++i) {
      SoftMessageT<float> row(1, cfg.model.k);
      for (int b = 0; b < cfg.model.k; ++b) row.at(0, b) = soft.at(i, b);
      SoftMessageT<float> grow(1, cfg.model.k, 0.0f);
      loss += frame_watermark_loss(row, msgs[i], &grow) / cfg.batch;
      for (int b = 0; b < cfg.model.k; ++b) gsoft.at(i, b) += grow.at(0, b) / cfg.batch;
    }
    const double lam_img =
        step < cfg.lambda_img_delay_fraction * cfg.steps ? 0.0 : cfg.lambda_img;
    Tensor4<float> g_img(xw.n, xw.c, xw.h, xw.w, 0.0f);
    loss += static_cast<float>(lam_img) * metric_distance(MetricKind::Mse, xw, img, &g_img);
    if (!std::isfinite(loss))
      throw TrainingError("pretrain_watermark_extractor: non-finite loss at step " +
                          std::to_string(step));
    res.loss_curve.push_back(loss);

    ext.net.zero_grads();
    emb.trunk.zero_grads();
    Tensor4<float> g_probs(cfg.batch, cfg.model.k, 1, 1);
    for (int i = 0; i < cfg.batch; ++i)
      for (int b = 0; b < cfg.model.k; ++b) g_probs.at(i, b, 0, 0) = gsoft.at(i, b);
    Tensor4<float> d_xin = ext.net.backward(ext_acts, g_probs);
    // Straight-through: treat the augmentation as identity in backward.
    for (std::size_t e = 0; e < g_img.v.size(); ++e)
      g_img.v[e] = static_cast<float>(lam_img) * g_img.v[e] + d_xin.v[e];
    embed_backward(emb, wk, g_img);
    opt.step(params, cfg.lr);
    res.steps_run = step + 1;
    if ((step + 1) % cfg.eval_every == 0) {
      const double acc = holdout_bit_acc(root.fork("ext-eval"));
      res.eval_trace.emplace_back(step + 1, acc);
      if (acc >= cfg.target_bit_acc + cfg.early_stop_margin) break;
    }
  }
  res.holdout_bit_accuracy = holdout_bit_acc(root.fork("ext-eval"));
  ext.net.freeze_all(true);  // extractor is frozen for all later stages
  return {std::move(ext), res};
}

}  // namespace vidsig
