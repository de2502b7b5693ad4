#pragma once

// Perturbation-Aware Suppression: score each decoder layer by how much an
// isotropic Gaussian parameter perturbation changes the decoded output,
// then select the low-impact set for fine-tuning and freeze the rest.
// Scores average over B latents and R independent noise draws; the noise
// scale can be absolute or relative to each layer's parameter RMS (the
// relative mode keeps scores comparable across layers of very different
// magnitude and is the default).

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "vidsig/errors.hpp"
#include "vidsig/metrics.hpp"
#include "vidsig/model.hpp"
#include "vidsig/nn.hpp"
#include "vidsig/rng.hpp"

namespace vidsig {

struct PASConfig {
  double sigma = 1e-2;
  bool sigma_relative = true;  // sigma scales per-layer parameter RMS
  double tau = std::numeric_limits<double>::quiet_NaN();  // absolute threshold; NaN -> quantile
  double freeze_top_fraction = 0.2;  // quantile mode: freeze this share of most sensitive layers
  int samples = 10;   // B latents
  int repeats = 10;   // R noise draws per layer
  MetricKind metric = MetricKind::Mse;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(sigma > 0)) throw ConfigError("pas: sigma must be > 0");
    if (samples < 1) throw ConfigError("pas: sample count B must be >= 1");
    if (repeats < 1) throw ConfigError("pas: repeat count R must be >= 1");
    if (!std::isnan(tau) && tau < 0) throw ConfigError("pas: tau must be >= 0");
    if (std::isnan(tau) && !(freeze_top_fraction >= 0 && freeze_top_fraction < 1))
      throw ConfigError("pas: freeze_top_fraction must be in [0, 1)");
  }
};

struct LayerSensitivity {
  std::string layer;
  double score = 0;   // s_j
  double stddev = 0;  // spread over the B*R distances
  bool selected = false;
};

struct LayerSensitivityReport {
  std::vector<LayerSensitivity> layers;
  std::vector<std::string> selected;  // L_ft, in layer order
  double sigma = 0;
  bool sigma_relative = true;
  double tau_used = 0;
  int samples = 0, repeats = 0;
  std::uint64_t seed = 0;
  bool empty_selection = false;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["sigma"] = sigma;
    j["sigma_relative"] = sigma_relative;
    j["tau"] = tau_used;
    j["samples"] = samples;
    j["repeats"] = repeats;
    j["seed"] = seed;
    j["empty_selection"] = empty_selection;
    j["selected"] = selected;
    auto arr = nlohmann::json::array();
    for (const auto& l : layers)
      arr.push_back({{"layer", l.layer}, {"score", l.score}, {"std", l.stddev}, {"selected", l.selected}});
    j["layers"] = arr;
    return j;
  }

  static LayerSensitivityReport from_json(const nlohmann::json& j) {
    LayerSensitivityReport r;
    r.sigma = j.value("sigma", 0.0);
    r.sigma_relative = j.value("sigma_relative", true);
    r.tau_used = j.value("tau", 0.0);
    r.samples = j.value("samples", 0);
    r.repeats = j.value("repeats", 0);
    r.seed = j.value("seed", std::uint64_t{0});
    r.empty_selection = j.value("empty_selection", false);
    r.selected = j.value("selected", std::vector<std::string>{});
    for (const auto& lj : j.at("layers"))
      r.layers.push_back({lj.at("layer").get<std::string>(), lj.at("score").get<double>(),
                          lj.value("std", 0.0), lj.at("selected").get<bool>()});
    return r;
  }

  // Text histogram in the style of a per-layer sensitivity plot.
  std::string histogram() const {
    double maxs = 0;
    std::size_t name_w = 0;
    for (const auto& l : layers) {
      maxs = std::max(maxs, l.score);
      name_w = std::max(name_w, l.layer.size());
    }
    std::string out;
    for (const auto& l : layers) {
      const int bar = maxs > 0 ? static_cast<int>(std::lround(40.0 * l.score / maxs)) : 0;
      std::string line = l.layer;
      line.resize(name_w, ' ');
      char buf[64];
      std::snprintf(buf, sizeof buf, "  %.3e  ", l.score);
      line += buf;
      line += std::string(static_cast<std::size_t>(bar), '#');
      line += l.selected ? "  [fine-tune]" : "  [frozen]";
      out += line + "\n";
    }
    return out;
  }
};

namespace detail {

template <typename T>
double param_rms(nn::Layer<T>* layer) {
  double acc = 0;
  std::size_t count = 0;
  for (auto* p : layer->params()) {
    for (T x : p->value.v) acc += static_cast<double>(x) * static_cast<double>(x);
    count += p->value.v.size();
  }
  return count ? std::sqrt(acc / count) : 0.0;
}

}  // namespace detail

// theta_j += eps, eps ~ N(0, sigma^2 I) elementwise over every parameter of
// the layer; all other layers untouched.
template <typename T>
void perturb_layer(nn::Sequential<T>& net, int layer_index, double sigma, Rng& rng) {
  auto layers = net.param_layers();
  if (layer_index < 0 || layer_index >= static_cast<int>(layers.size()))
    throw ConfigError("perturb_layer: invalid layer index");
  if (sigma == 0) return;
  for (auto* p : layers[static_cast<std::size_t>(layer_index)]->params())
    for (T& x : p->value.v) x = static_cast<T>(static_cast<double>(x) + rng.gaussian(0.0, sigma));
}

// s_j over B latents and R draws, restoring parameters bit-exactly.
// reference_outputs must hold decode(dec, latents[i]) for the unperturbed
// decoder.
template <typename T>
double layer_score(DecoderT<T>& dec, const std::vector<Tensor4<T>>& latents, int layer_index,
                   const PASConfig& cfg, const std::vector<Tensor4<T>>& reference_outputs,
                   double* stddev_out = nullptr) {
  cfg.validate();
  auto layers = dec.net.param_layers();
  if (layer_index < 0 || layer_index >= static_cast<int>(layers.size()))
    throw ConfigError("layer_score: invalid layer index");
  auto* layer = layers[static_cast<std::size_t>(layer_index)];
  const double sigma_eff =
      cfg.sigma_relative ? cfg.sigma * detail::param_rms(layer) : cfg.sigma;

  // Snapshot just this layer; everything else is untouched.
  std::vector<std::vector<T>> saved;
  for (auto* p : layer->params()) saved.push_back(p->value.v);

  std::vector<double> distances;
  distances.reserve(static_cast<std::size_t>(cfg.repeats) * latents.size());
  for (int r = 0; r < cfg.repeats; ++r) {
    Rng noise = Rng(cfg.seed).fork("pas-noise", (static_cast<std::uint64_t>(layer_index) << 20) + r);
    perturb_layer(dec.net, layer_index, sigma_eff, noise);
    for (std::size_t i = 0; i < latents.size(); ++i) {
      Tensor4<T> out = decode(dec, latents[i]);
      if (!out.all_finite()) {
        auto ps = layer->params();
        for (std::size_t pi = 0; pi < ps.size(); ++pi) ps[pi]->value.v = saved[pi];
        throw TrainingError("pas: non-finite decoder output while scoring layer " + layer->name());
      }
      distances.push_back(
          static_cast<double>(metric_distance(cfg.metric, out, reference_outputs[i])));
    }
    auto ps = layer->params();
    for (std::size_t pi = 0; pi < ps.size(); ++pi) ps[pi]->value.v = saved[pi];
  }
  double mean = 0;
  for (double d : distances) mean += d;
  mean /= distances.size();
  if (stddev_out) {
    double var = 0;
    for (double d : distances) var += (d - mean) * (d - mean);
    *stddev_out = distances.size() > 1 ? std::sqrt(var / (distances.size() - 1)) : 0.0;
  }
  return mean;
}

// Full search (Algorithm: reference pass, per-layer perturb/score/restore,
// threshold selection). Also applies the freeze mask: layers outside L_ft
// are frozen on the decoder.
template <typename T>
LayerSensitivityReport pas_select(DecoderT<T>& dec, const std::vector<Tensor4<T>>& latents,
                                  const PASConfig& cfg) {
  cfg.validate();
  if (latents.empty()) throw ConfigError("pas_select: no latents supplied");
  if (static_cast<int>(latents.size()) < cfg.samples)
    throw ConfigError("pas_select: fewer latents than configured sample count");

  auto before = nn::snapshot_params(dec.net);

  std::vector<Tensor4<T>> refs;
  refs.reserve(cfg.samples);
  for (int i = 0; i < cfg.samples; ++i) refs.push_back(decode(dec, latents[i]));
  std::vector<Tensor4<T>> lat(latents.begin(), latents.begin() + cfg.samples);

  LayerSensitivityReport report;
  report.sigma = cfg.sigma;
  report.sigma_relative = cfg.sigma_relative;
  report.samples = cfg.samples;
  report.repeats = cfg.repeats;
  report.seed = cfg.seed;

  auto layers = dec.net.param_layers();
  for (int j = 0; j < static_cast<int>(layers.size()); ++j) {
    LayerSensitivity ls;
    ls.layer = layers[static_cast<std::size_t>(j)]->name();
    ls.score = layer_score(dec, lat, j, cfg, refs, &ls.stddev);
    report.layers.push_back(ls);
  }

  double tau = cfg.tau;
  if (std::isnan(tau)) {
    // Quantile mode: freeze the top share of most sensitive layers.
    const int n = static_cast<int>(report.layers.size());
    const int freeze_count =
        std::clamp(static_cast<int>(std::ceil(cfg.freeze_top_fraction * n)), 1, n);
    std::vector<double> scores;
    for (const auto& l : report.layers) scores.push_back(l.score);
    std::sort(scores.begin(), scores.end(), std::greater<>());
    tau = scores[static_cast<std::size_t>(freeze_count - 1)];
  }
  report.tau_used = tau;

  for (std::size_t j = 0; j < report.layers.size(); ++j) {
    const bool sel = report.layers[j].score < tau;
    report.layers[j].selected = sel;
    layers[j]->frozen = !sel;
    if (sel) report.selected.push_back(report.layers[j].layer);
  }
  report.empty_selection = report.selected.empty();

  nn::restore_params(dec.net, before);  // bit-exact restore of all parameters
  return report;
}

// Re-apply a report's freeze mask to a freshly loaded decoder.
template <typename T>
void apply_freeze_mask(DecoderT<T>& dec, const LayerSensitivityReport& report) {
  auto layers = dec.net.param_layers();
  if (layers.size() != report.layers.size())
    throw ConfigError("apply_freeze_mask: layer count mismatch with report");
  for (std::size_t j = 0; j < layers.size(); ++j) {
    if (layers[j]->name() != report.layers[j].layer)
      throw ConfigError("apply_freeze_mask: layer name mismatch at " + layers[j]->name());
    layers[j]->frozen = !report.layers[j].selected;
  }
}

}  // namespace vidsig
