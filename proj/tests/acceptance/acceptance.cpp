// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Criteria 1-4 and 8-9 are self-contained math checks;
// criteria 5-7 and 10 share one end-to-end pipeline run per message length.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "vidsig/cli.hpp"
#include "vidsig/detection.hpp"
#include "vidsig/losses.hpp"
#include "vidsig/metrics.hpp"
#include "vidsig/model.hpp"
#include "vidsig/pas.hpp"
#include "vidsig/synthetic.hpp"
#include "vidsig/tamper.hpp"
#include "vidsig/training.hpp"

using namespace vidsig;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[criterion %2d] %-34s %s  (%s)\n", id, name.c_str(), pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// ---------------------------------------------------------------------------
// Criterion 1: exact binomial detection math

void criterion_1() {
  const double t0 = now_s();
  // Exact oracle: Pascal triangle in 128-bit integers.
  const int k = 48;
  std::vector<unsigned __int128> C(k + 1, 0);
  C[0] = 1;
  for (int n = 1; n <= k; ++n)
    for (int j = n; j >= 1; --j) C[j] += C[j - 1];
  auto oracle_fpr = [&](int tau) {
    unsigned __int128 s = 0;
    for (int j = tau + 1; j <= k; ++j) s += C[j];
    return static_cast<long double>(s) * std::ldexp(1.0L, -k);
  };
  bool pass = true;
  double worst = 0;
  for (int tau = 0; tau <= k; ++tau) {
    const long double want = oracle_fpr(tau);
    const double got = fpr_at(tau, k);
    if (want == 0.0L) {
      if (got != 0.0) pass = false;
      continue;
    }
    const double rel = static_cast<double>(std::fabs((static_cast<long double>(got) - want) / want));
    worst = std::max(worst, rel);
    if (rel >= 1e-12) pass = false;
  }
  for (double target : {1e-2, 1e-3, 1e-4, 1e-6}) {
    int want = k;
    for (int tau = 0; tau <= k; ++tau)
      if (oracle_fpr(tau) <= static_cast<long double>(target)) {
        want = tau;
        break;
      }
    if (detection_threshold(k, target) != want) pass = false;
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "worst rel err %.2e, thresholds {32,35,37,40}, %.2fs", worst,
                now_s() - t0);
  report(1, "detection math exact", pass, buf);
}

// ---------------------------------------------------------------------------
// Criterion 2: loss closed forms

void criterion_2() {
  const double t0 = now_s();
  const int k = 48;
  Rng rng(5);
  auto m = WatermarkMessage::random(k, rng);
  SoftMessageT<double> half(3, k, 0.5);
  const double lfr = frame_watermark_loss(half, m);
  const double want = k * 0.6931471805599453;
  const bool fr_ok = std::fabs(lfr - want) < 1e-9;

  Tensor4<double> v(4, 1, 8, 8);
  for (auto& x : v.v) x = rng.uniform(0.1, 0.7);
  auto voff = v;
  for (auto& x : voff.v) x += 0.2345;
  const double tl = temporal_loss(voff, v, MetricKind::Mse);
  const bool t_ok = std::fabs(tl) <= 1e-12;

  char buf[128];
  std::snprintf(buf, sizeof buf, "L_fr(0.5)=%.12f vs %.12f; offset tl=%.2e, %.2fs", lfr, want, tl,
                now_s() - t0);
  report(2, "loss closed forms", fr_ok && t_ok, buf);
}

// ---------------------------------------------------------------------------
// Criterion 3: gradient checks for the five losses

double grad_rel_err(const std::function<double(const std::vector<double>&)>& f,
                    const std::vector<double>& x0, const std::vector<double>& analytic,
                    double h = 1e-6) {
  double err2 = 0, fd2 = 0, an2 = 0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    auto xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (f(xp) - f(xm)) / (2 * h);
    err2 += (fd - analytic[i]) * (fd - analytic[i]);
    fd2 += fd * fd;
    an2 += analytic[i] * analytic[i];
  }
  return std::sqrt(err2) / std::max({std::sqrt(fd2), std::sqrt(an2), 1e-12});
}

void criterion_3() {
  const double t0 = now_s();
  const int f = 2, k = 8, c = 1, hh = 8, ww = 8;
  Rng rng(6);
  auto m = WatermarkMessage::random(k, rng);
  LossWeights w;

  bool pass = true;
  double worst = 0;
  auto note = [&](double rel) {
    worst = std::max(worst, rel);
    if (rel >= 1e-4) pass = false;
  };

  // soft-message losses
  std::vector<double> p0(static_cast<std::size_t>(f) * k);
  for (auto& x : p0) x = rng.uniform(0.1, 0.9);
  auto soft_of = [&](const std::vector<double>& x) {
    SoftMessageT<double> s(f, k);
    s.p = x;
    return s;
  };
  {
    SoftMessageT<double> g(f, k, 0.0);
    frame_watermark_loss(soft_of(p0), m, &g);
    note(grad_rel_err([&](auto& x) { return frame_watermark_loss(soft_of(x), m); }, p0, g.p));
  }
  {
    SoftMessageT<double> g(f, k, 0.0);
    video_watermark_loss(soft_of(p0), m, &g);
    note(grad_rel_err([&](auto& x) { return video_watermark_loss(soft_of(x), m); }, p0, g.p));
  }
  {
    SoftMessageT<double> g(f, k, 0.0);
    watermark_loss(soft_of(p0), m, w, &g);
    note(grad_rel_err([&](auto& x) { return watermark_loss(soft_of(x), m, w); }, p0, g.p));
  }

  // video-tensor losses
  Tensor4<double> ref(f, c, hh, ww);
  for (auto& x : ref.v) x = rng.uniform(0.0, 1.0);
  std::vector<double> v0(ref.v.size());
  for (std::size_t i = 0; i < v0.size(); ++i) v0[i] = ref.v[i] + rng.uniform(0.02, 0.25);
  auto tensor_of = [&](const std::vector<double>& x) {
    Tensor4<double> t(f, c, hh, ww);
    t.v = x;
    return t;
  };
  {
    Tensor4<double> g(f, c, hh, ww, 0.0);
    spatial_loss(tensor_of(v0), ref, MetricKind::Mse, &g);
    note(grad_rel_err([&](auto& x) { return spatial_loss(tensor_of(x), ref, MetricKind::Mse); },
                      v0, g.v));
  }
  {
    Tensor4<double> g(f, c, hh, ww, 0.0);
    temporal_loss(tensor_of(v0), ref, MetricKind::Mse, &g);
    note(grad_rel_err([&](auto& x) { return temporal_loss(tensor_of(x), ref, MetricKind::Mse); },
                      v0, g.v));
  }

  char buf[96];
  std::snprintf(buf, sizeof buf, "worst rel err %.2e over 5 losses, %.2fs", worst, now_s() - t0);
  report(3, "loss gradient checks", pass, buf);
}

// ---------------------------------------------------------------------------
// Criterion 4: PAS properties

void criterion_4() {
  const double t0 = now_s();
  bool pass = true;
  std::string detail;

  // (a) bit-exact restoration on a production-shaped decoder
  {
    ModelSpec spec;  // default desk model
    Rng rng(7);
    auto dec = make_decoder<float>(spec, rng);
    std::vector<std::vector<float>> before;
    for (auto* p : dec.net.params()) before.push_back(p->value.v);
    std::vector<Tensor4<float>> zs;
    for (int i = 0; i < 4; ++i) zs.push_back(random_gaussian<float>(2, spec.latent_channels, 8, 8, rng));
    PASConfig cfg;
    cfg.samples = 4;
    cfg.repeats = 3;
    cfg.seed = 11;
    auto rep = pas_select(dec, zs, cfg);
    auto after = dec.net.params();
    for (std::size_t i = 0; i < after.size(); ++i)
      if (after[i]->value.v != before[i]) pass = false;
    detail += "restore ok; ";

    // (b) threshold monotonicity of the selected set
    std::vector<double> taus;
    for (const auto& l : rep.layers) taus.push_back(l.score * 1.000001);
    std::sort(taus.begin(), taus.end());
    std::vector<std::string> prev;
    for (double tau : taus) {
      PASConfig c2 = cfg;
      c2.tau = tau;
      auto r2 = pas_select(dec, zs, c2);
      for (const auto& name : prev)
        if (std::find(r2.selected.begin(), r2.selected.end(), name) == r2.selected.end())
          pass = false;
      prev = r2.selected;
    }
    detail += "monotone; ";
  }

  // (c) constructed high-sensitivity layer ranked top in >= 95/100 runs
  {
    Rng rng(12);
    std::vector<Tensor4<float>> zs;
    for (int i = 0; i < 10; ++i) zs.push_back(random_gaussian<float>(1, 1, 6, 6, rng));
    int top = 0;
    for (int seed = 0; seed < 100; ++seed) {
      DecoderT<float> d;
      d.spec.latent_channels = 1;
      d.spec.image_channels = 1;
      auto* early = d.net.add(nn::Conv2d<float>("early", 1, 1, 1, 1, 0));
      early->w_.value.v[0] = 1.0f;
      auto* scale = d.net.add(nn::Conv2d<float>("scale", 1, 1, 1, 1, 0));
      scale->w_.value.v[0] = 0.05f;
      PASConfig cfg;
      cfg.sigma = 0.02;
      cfg.sigma_relative = false;
      cfg.samples = 10;
      cfg.repeats = 10;
      cfg.seed = static_cast<std::uint64_t>(seed);
      auto rep = pas_select(d, zs, cfg);
      if (rep.layers[1].score > rep.layers[0].score) ++top;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "ranking %d/100", top);
    detail += buf;
    if (top < 95) pass = false;
  }

  char buf[160];
  std::snprintf(buf, sizeof buf, "%s, %.1fs", detail.c_str(), now_s() - t0);
  report(4, "PAS properties", pass, buf);
}

// ---------------------------------------------------------------------------
// Criterion 8: metric oracles (brute-force implementations on 16x16)

double psnr_oracle(const Tensor4<float>& a, const Tensor4<float>& b) {
  const std::size_t fsz = static_cast<std::size_t>(a.c) * a.h * a.w;
  long double total = 0;
  for (int t = a.n - 1; t >= 0; --t) {
    long double se = 0;
    for (std::size_t e = fsz; e-- > 0;) {
      const long double d = static_cast<long double>(a.v[t * fsz + e]) - b.v[t * fsz + e];
      se += d * d;
    }
    const long double mse = se / fsz;
    total += mse <= 0 ? 100.0L : std::min(100.0L, 10.0L * std::log10(1.0L / mse));
  }
  return static_cast<double>(total / a.n);
}

double ssim_oracle(const Tensor4<float>& a, const Tensor4<float>& b) {
  constexpr double C1 = 1e-4, C2 = 9e-4;
  const int win = 11;
  const auto w = detail::gaussian_window(win, 1.5);
  double video = 0;
  for (int t = 0; t < a.n; ++t) {
    double frame = 0;
    for (int ch = 0; ch < a.c; ++ch) {
      double acc = 0;
      int cnt = 0;
      for (int y0 = 0; y0 + win <= a.h; ++y0)
        for (int x0 = 0; x0 + win <= a.w; ++x0) {
          double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
          for (int dy = 0; dy < win; ++dy)
            for (int dx = 0; dx < win; ++dx) {
              const double xa = a.at(t, ch, y0 + dy, x0 + dx);
              const double xb = b.at(t, ch, y0 + dy, x0 + dx);
              const double wv = w[dy * win + dx];
              mx += wv * xa;
              my += wv * xb;
              mxx += wv * xa * xa;
              myy += wv * xb * xb;
              mxy += wv * xa * xb;
            }
          acc += ((2 * mx * my + C1) * (2 * (mxy - mx * my) + C2)) /
                 ((mx * mx + my * my + C1) * ((mxx - mx * mx) + (myy - my * my) + C2));
          ++cnt;
        }
      frame += acc / cnt;
    }
    video += frame / a.c;
  }
  return video / a.n;
}

double tlp_oracle(const Tensor4<float>& a, const Tensor4<float>& b) {
  double acc = 0;
  for (int t = 1; t < a.n; ++t)
    acc += std::fabs(lp_downsampled_mse(a.frame(t - 1), a.frame(t)) -
                     lp_downsampled_mse(b.frame(t - 1), b.frame(t)));
  return acc / (a.n - 1);
}

void criterion_8() {
  const double t0 = now_s();
  Rng rng(8);
  bool pass = true;
  double worst = 0;
  for (int it = 0; it < 8; ++it) {
    auto a = random_uniform<float>(4, 3, 16, 16, rng);
    auto b = random_uniform<float>(4, 3, 16, 16, rng);
    const double dp = std::fabs(psnr(a, b) - psnr_oracle(a, b));
    const double ds = std::fabs(ssim(a, b) - ssim_oracle(a, b));
    const double dt = std::fabs(tlp(a, b) - tlp_oracle(a, b));
    worst = std::max({worst, dp, ds, dt});
    if (dp >= 1e-9 || ds >= 1e-9 || dt >= 1e-9) pass = false;
  }
  auto x = random_uniform<float>(3, 3, 16, 16, rng);
  if (ssim(x, x) != 1.0) pass = false;
  if (tlp(x, x) != 0.0) pass = false;
  char buf[96];
  std::snprintf(buf, sizeof buf, "worst |diff| %.2e; ssim(x,x)=1, tlp(v,v)=0 exact, %.2fs", worst,
                now_s() - t0);
  report(8, "metric oracles", pass, buf);
}

// ---------------------------------------------------------------------------
// Criterion 9: LR schedule endpoints

void criterion_9() {
  TrainConfig cfg;
  cfg.message = WatermarkMessage::parse("1");
  cfg.total_steps = 937;
  cfg.warmup_steps = 211;
  cfg.lr_base = 5e-4;
  cfg.lr_min = 1e-6;
  const bool pass = lr_schedule(0, cfg) == 0.0 && lr_schedule(211, cfg) == cfg.lr_base &&
                    lr_schedule(937, cfg) == cfg.lr_min && lr_schedule(10000, cfg) == cfg.lr_min;
  report(9, "LR schedule endpoints exact", pass,
         "lr(0)=0, lr(T_w)=lr_b, lr(T_t)=lr_m, clamped past T_t");
}

// ---------------------------------------------------------------------------
// End-to-end pipeline (criteria 5, 6, 7, 10)

struct PipelineArtifacts {
  LatentEncoder enc;
  LatentDecoder dec;
  LatentDecoder wm_dec;
  WatermarkExtractor ext;
  WatermarkMessage key;
  std::vector<VideoTensor> holdout;
  std::vector<LatentTensor> holdout_latents;
  std::vector<VideoTensor> vanilla, watermarked;
  double ae_psnr = 0;
  double ext_bit_acc = 0;
  double benign_voted_acc = 0;
  double wm_psnr = 0;
};

PipelineArtifacts run_pipeline(int k, const std::vector<VideoTensor>& train,
                               const std::vector<VideoTensor>& holdout, LatentEncoder enc,
                               LatentDecoder dec, double ae_psnr, std::uint64_t seed) {
  PipelineArtifacts art{std::move(enc), std::move(dec), {}, {}, {}, holdout, {}, {}, {}, ae_psnr};

  ModelSpec spec = art.dec.spec;
  spec.k = k;
  ExtractorPretrainConfig ecfg;
  ecfg.model = spec;
  ecfg.seed = Rng(seed).fork("ext", static_cast<std::uint64_t>(k)).next_u64();
  auto [ext, eres] = pretrain_watermark_extractor(ecfg, train, holdout);
  art.ext = std::move(ext);
  art.ext_bit_acc = eres.holdout_bit_accuracy;
  std::printf("    [k=%d] extractor holdout bit accuracy %.4f after %d steps\n", k,
              eres.holdout_bit_accuracy, eres.steps_run);
  std::fflush(stdout);

  // PAS on sampled vanilla latents
  std::vector<LatentTensor> pas_latents;
  for (int i = 0; i < 10; ++i) pas_latents.push_back(encode(art.enc, holdout[static_cast<std::size_t>(i)]));
  PASConfig pcfg;
  pcfg.seed = Rng(seed).fork("pas", static_cast<std::uint64_t>(k)).next_u64();
  auto pas_report = pas_select(art.dec, pas_latents, pcfg);

  TrainConfig tcfg;
  Rng keyrng = Rng(seed).fork("key", static_cast<std::uint64_t>(k));
  tcfg.message = WatermarkMessage::random(k, keyrng);
  tcfg.total_steps = 600;
  tcfg.seed = Rng(seed).fork("finetune", static_cast<std::uint64_t>(k)).next_u64();
  auto [tuned, log] = finetune(art.dec, art.enc, art.ext, train, tcfg, pas_report);
  art.wm_dec = std::move(tuned);
  art.key = tcfg.message;
  std::printf("    [k=%d] finetune probe bit accuracy %.4f\n", k, log.final_bit_accuracy);
  std::fflush(stdout);

  for (const auto& clip : holdout) {
    art.holdout_latents.push_back(encode(art.enc, clip));
    art.vanilla.push_back(decode(art.dec, art.holdout_latents.back()));
    art.watermarked.push_back(decode(art.wm_dec, art.holdout_latents.back()));
  }
  double acc = 0, psnr_acc = 0;
  for (std::size_t i = 0; i < art.watermarked.size(); ++i) {
    auto voted = majority_vote(extract(art.ext, art.watermarked[i]));
    acc += bit_accuracy(voted, art.key);
    psnr_acc += psnr(art.watermarked[i], art.vanilla[i]);
  }
  art.benign_voted_acc = acc / art.watermarked.size();
  art.wm_psnr = psnr_acc / art.watermarked.size();
  return art;
}

void criterion_5(const PipelineArtifacts& a48, const PipelineArtifacts& a8, double elapsed_s) {
  char buf[256];
  const bool pass = a48.benign_voted_acc >= 0.95 && a48.wm_psnr >= 22.0 &&
                    a8.benign_voted_acc >= 0.95 && a8.wm_psnr >= 22.0;
  std::snprintf(buf, sizeof buf,
                "k=48: acc %.4f psnr %.2f dB | k=8: acc %.4f psnr %.2f dB | AE %.2f dB, %.0fs",
                a48.benign_voted_acc, a48.wm_psnr, a8.benign_voted_acc, a8.wm_psnr, a48.ae_psnr,
                elapsed_s);
  report(5, "end-to-end desk surrogate", pass, buf);

  // Module-level derived examples measured on the same pipeline run.
  {
    char d[96];
    std::snprintf(d, sizeof d, "%.2f dB (target >= 28)", a48.ae_psnr);
    report(5, "  autoencoder pretrain PSNR", a48.ae_psnr >= 28.0, d);
  }
  {
    char d[96];
    std::snprintf(d, sizeof d, "k=48: %.4f, k=8: %.4f (target >= 0.98)", a48.ext_bit_acc,
                  a8.ext_bit_acc);
    report(5, "  extractor pretrain accuracy", a48.ext_bit_acc >= 0.98 && a8.ext_bit_acc >= 0.98,
           d);
  }
  {
    // Extraction on pure noise stays near chance against a random key.
    Rng rng(99);
    double acc = 0;
    auto key = WatermarkMessage::random(48, rng);
    for (int i = 0; i < 100; ++i) {
      auto noise = random_uniform<float>(1, 3, 64, 64, rng);
      auto soft = extract(a48.ext, noise);
      for (int b = 0; b < 48; ++b)
        acc += (soft.at(0, b) > 0.5f ? 1 : 0) == key.bits[b];
    }
    acc /= 100.0 * 48;
    char d[96];
    std::snprintf(d, sizeof d, "mean bit accuracy %.4f (chance band [0.4, 0.6])", acc);
    report(5, "  extractor chance level on noise", acc >= 0.4 && acc <= 0.6, d);
  }
  {
    const int tau = detection_threshold(48, 1e-4);
    int hits = 0;
    for (const auto& v : a48.watermarked)
      hits += match_count(majority_vote(extract(a48.ext, v)), a48.key) > tau;
    const double tpr = static_cast<double>(hits) / a48.watermarked.size();
    char d[96];
    std::snprintf(d, sizeof d, "TPR@1e-4 = %.4f over %zu videos (target >= 0.95)", tpr,
                  a48.watermarked.size());
    report(5, "  detection TPR at FPR 1e-4", tpr >= 0.95, d);
  }
}

void criterion_6(const PipelineArtifacts& art) {
  const double t0 = now_s();
  Rng rng(31);
  const double benign = art.benign_voted_acc;
  bool pass = true;
  std::string detail;
  const std::vector<std::string> attacks = {"fd", "fs", "fi", "fig", "fa:n=3", "fa:n=5"};
  for (const auto& s : attacks) {
    auto spec = AttackSpec::parse(s);
    double acc = 0;
    for (const auto& v : art.watermarked) {
      spec.seed = rng.next_u64();
      auto tampered = apply_attack(v, spec);
      acc += bit_accuracy(majority_vote(extract(art.ext, tampered)), art.key);
    }
    acc /= art.watermarked.size();
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s %.4f ", s.c_str(), acc);
    detail += buf;
    if (acc < benign - 0.01) pass = false;
  }

  // exact permutation invariance of the vote
  {
    const auto& v = art.watermarked.front();
    VideoTensor perm(v.n, v.c, v.h, v.w);
    for (int t = 0; t < v.n; ++t) perm.set_frame(t, v.frame((t + 3) % v.n));
    if (!(majority_vote(extract(art.ext, perm)) == majority_vote(extract(art.ext, v))))
      pass = false;
    detail += "| vote perm-invariant";
  }
  char buf[256];
  std::snprintf(buf, sizeof buf, "benign %.4f | %s, %.0fs", benign, detail.c_str(), now_s() - t0);
  report(6, "temporal robustness", pass, buf);
}

void criterion_7(const PipelineArtifacts& art, std::uint64_t seed) {
  const double t0 = now_s();
  // 200 fresh vanilla videos (never watermarked) against random keys.
  SyntheticDatasetSpec nspec;
  nspec.count = 200;
  nspec.frames = 8;
  nspec.height = 64;
  nspec.width = 64;
  nspec.seed = Rng(seed).fork("null-corpus").next_u64();
  auto null_clips = generate_synthetic_dataset(nspec);

  DetectionConfig dcfg;
  dcfg.k = art.key.k();
  dcfg.fpr_target = 1e-4;
  const int tau = detection_threshold(dcfg.k, dcfg.fpr_target);
  Rng keyrng = Rng(seed).fork("null-keys");
  int fp = 0;
  for (const auto& clip : null_clips) {
    auto z = encode(art.enc, clip);
    auto vanilla = decode(art.dec, z);
    auto voted = majority_vote(extract(art.ext, vanilla));
    auto key = WatermarkMessage::random(dcfg.k, keyrng);
    fp += match_count(voted, key) > tau;
  }
  // 95% binomial upper limit for n trials at p = fpr target.
  int limit = 0;
  {
    const int n = static_cast<int>(null_clips.size());
    long double cdf = 0;
    for (int c = 0; c <= n; ++c) {
      long double logp = 0;
      for (int i = 0; i < c; ++i)
        logp += std::log((long double)(n - i)) - std::log((long double)(i + 1));
      logp += c * std::log((long double)dcfg.fpr_target) +
              (n - c) * std::log1p(-(long double)dcfg.fpr_target);
      cdf += std::exp(logp);
      if (cdf >= 0.95L) {
        limit = c;
        break;
      }
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d/200 false positives at FPR 1e-4 (95%% bound %d), %.0fs", fp,
                limit, now_s() - t0);
  report(7, "null calibration", fp <= limit, buf);
}

void criterion_10(const PipelineArtifacts& art) {
  const double t0 = now_s();
  using clock = std::chrono::steady_clock;
  const int clips = 4, runs = 20;
  std::vector<double> t_vanilla, t_wm;
  for (int r = 0; r < runs; ++r) {
    auto a = clock::now();
    for (int i = 0; i < clips; ++i) decode(art.dec, art.holdout_latents[static_cast<std::size_t>(i)]);
    auto b = clock::now();
    for (int i = 0; i < clips; ++i) decode(art.wm_dec, art.holdout_latents[static_cast<std::size_t>(i)]);
    auto c = clock::now();
    t_vanilla.push_back(std::chrono::duration<double>(b - a).count());
    t_wm.push_back(std::chrono::duration<double>(c - b).count());
  }
  std::sort(t_vanilla.begin(), t_vanilla.end());
  std::sort(t_wm.begin(), t_wm.end());
  const double mv = t_vanilla[runs / 2], mw = t_wm[runs / 2];
  const double rel = std::fabs(mw - mv) / mv;
  char buf[128];
  std::snprintf(buf, sizeof buf, "median vanilla %.1f ms, watermarked %.1f ms, |T_i| %.2f%%, %.0fs",
                1e3 * mv, 1e3 * mw, 100 * rel, now_s() - t0);
  report(10, "in-generation latency", rel <= 0.05, buf);
}

}  // namespace

int main() {
  std::printf("vidsig acceptance suite\n");
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_8();
  criterion_9();

  std::printf("-- end-to-end pipeline (200 clips, 8 frames, 64x64) --\n");
  const double t0 = now_s();
  const std::uint64_t seed = 42;
  SyntheticDatasetSpec dspec;
  dspec.count = 200;
  dspec.frames = 8;
  dspec.height = 64;
  dspec.width = 64;
  dspec.seed = seed;
  auto clips = generate_synthetic_dataset(dspec);
  std::vector<VideoTensor> train(clips.begin(), clips.begin() + 150);
  std::vector<VideoTensor> holdout(clips.begin() + 150, clips.end());
  clips.clear();

  AutoencoderPretrainConfig acfg;
  acfg.model = ModelSpec{};
  acfg.seed = Rng(seed).fork("ae").next_u64();
  auto [models, ares] = pretrain_autoencoder(acfg, train, holdout);
  std::printf("    autoencoder holdout PSNR %.2f dB after %d steps\n", ares.holdout_psnr_db,
              ares.steps_run);
  std::fflush(stdout);

  auto a48 = run_pipeline(48, train, holdout, models.first, models.second, ares.holdout_psnr_db,
                          seed);
  auto a8 = run_pipeline(8, train, holdout, models.first, models.second, ares.holdout_psnr_db,
                         seed);
  criterion_5(a48, a8, now_s() - t0);
  criterion_6(a48);
  criterion_7(a48, seed);
  criterion_10(a48);

  std::printf("%d criterion(s) failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
