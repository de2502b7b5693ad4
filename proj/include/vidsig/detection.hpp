#pragma once

// Watermark detection: majority voting over per-frame soft messages and a
// binomial hypothesis test. Under H0 the extracted bits are i.i.d.
// Bernoulli(1/2), so the match count M follows Bin(k, 1/2) and
// FPR(tau) = P(M > tau) is an exact binomial tail. The tail is evaluated
// with a long-double coefficient recurrence: for k <= 64 every coefficient
// and partial sum fits the 64-bit mantissa, so the result is exact to the
// last digit and cannot underflow at the FPR levels the evaluation sweeps.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vidsig/errors.hpp"
#include "vidsig/tensor.hpp"

namespace vidsig {

// The detection rule is stated as M >= tau but the FPR formula computes
// P(M > tau); the strict form follows the formula and is the default.
enum class ThresholdMode { StrictGreater, InclusiveGeq };

struct DetectionConfig {
  int k = 48;
  double fpr_target = 1e-4;
  ThresholdMode mode = ThresholdMode::StrictGreater;

  void validate() const {
    if (k < 1) throw ConfigError("detection: k must be >= 1");
    if (!(fpr_target > 0.0) || !(fpr_target < 1.0 + 1e-15))
      throw ConfigError("detection: fpr_target must be in (0, 1]");
  }
};

inline int match_count(const WatermarkMessage& a, const WatermarkMessage& b) {
  if (a.k() != b.k()) throw KeyLengthError("match_count: message lengths differ");
  int m = 0;
  for (int i = 0; i < a.k(); ++i) m += a.bits[i] == b.bits[i];
  return m;
}

inline double bit_accuracy(const WatermarkMessage& a, const WatermarkMessage& b) {
  return static_cast<double>(match_count(a, b)) / a.k();
}

// Per-bit mean probability over frames, thresholded at 0.5. Exact ties
// resolve to bit 0 so the vote is deterministic.
template <typename T>
WatermarkMessage majority_vote(const SoftMessageT<T>& soft) {
  if (soft.frames < 1 || soft.k < 1) throw ShapeError("majority_vote: empty soft message");
  auto mean = soft.mean();
  std::vector<std::uint8_t> bits(soft.k);
  for (int i = 0; i < soft.k; ++i) bits[i] = mean[i] > T(0.5) ? 1 : 0;
  return WatermarkMessage(std::move(bits));
}

// FPR(tau) = P(M > tau | H0) = sum_{j=tau+1}^{k} C(k,j) 2^{-k}
inline double fpr_at(int tau, int k) {
  if (k < 1 || k > 64) throw ConfigError("fpr_at: k must be in [1, 64]");
  if (tau < 0 || tau > k) throw ConfigError("fpr_at: tau outside [0, k]");
  long double sum = 0.0L;
  long double coeff = 1.0L;  // C(k, k)
  for (int j = k; j > tau; --j) {
    sum += coeff;
    coeff = coeff * j / (k - j + 1);  // C(k, j-1)
  }
  return static_cast<double>(sum * std::ldexp(1.0L, -k));
}

// Smallest threshold whose FPR is at or below the target.
inline int detection_threshold(int k, double fpr_target, ThresholdMode mode = ThresholdMode::StrictGreater) {
  if (!(fpr_target > 0.0) || !(fpr_target < 1.0 + 1e-15))
    throw ConfigError("detection_threshold: fpr_target must be in (0, 1]");
  for (int tau = 0; tau <= k; ++tau) {
    const double f = mode == ThresholdMode::StrictGreater
                         ? fpr_at(tau, k)
                         : (tau == 0 ? 1.0 : fpr_at(tau - 1, k));  // P(M >= tau)
    if (f <= fpr_target) return tau;
  }
  return k;  // unreachable: fpr_at(k, k) == 0
}

struct DetectionResult {
  std::vector<int> per_frame_matches;
  WatermarkMessage voted;
  int matches = 0;           // M(voted, key)
  int threshold = 0;         // tau
  double fpr_at_threshold = 0;
  bool detected = false;
  double bit_acc = 0;
};

template <typename T>
DetectionResult detect_soft(const SoftMessageT<T>& soft, const WatermarkMessage& key,
                            const DetectionConfig& cfg) {
  cfg.validate();
  if (soft.k != key.k() || key.k() != cfg.k)
    throw KeyLengthError("detect: key length " + std::to_string(key.k()) +
                         " does not match extractor k=" + std::to_string(soft.k));
  DetectionResult r;
  r.voted = majority_vote(soft);
  for (int t = 0; t < soft.frames; ++t) {
    int m = 0;
    for (int i = 0; i < soft.k; ++i) m += (soft.at(t, i) > T(0.5) ? 1 : 0) == key.bits[i];
    r.per_frame_matches.push_back(m);
  }
  r.matches = match_count(r.voted, key);
  r.threshold = detection_threshold(cfg.k, cfg.fpr_target, cfg.mode);
  r.fpr_at_threshold = cfg.mode == ThresholdMode::StrictGreater
                           ? fpr_at(r.threshold, cfg.k)
                           : (r.threshold == 0 ? 1.0 : fpr_at(r.threshold - 1, cfg.k));
  r.detected = cfg.mode == ThresholdMode::StrictGreater ? r.matches > r.threshold
                                                        : r.matches >= r.threshold;
  r.bit_acc = static_cast<double>(r.matches) / cfg.k;
  return r;
}

// detect() on a pixel video: Extractor is any type usable with
// extract(extractor, video) -> SoftMessage (the model module provides one).
template <typename Extractor>
DetectionResult detect(const VideoTensor& v, const Extractor& extractor,
                       const WatermarkMessage& key, const DetectionConfig& cfg) {
  return detect_soft(extract(extractor, v), key, cfg);
}

struct CorpusSummary {
  int count = 0;
  double mean_bit_accuracy = 0;
  std::vector<std::pair<double, double>> tpr_at_fpr;  // (fpr target, TPR)
};

template <typename Extractor>
CorpusSummary evaluate_corpus(const std::vector<VideoTensor>& videos,
                              const std::vector<WatermarkMessage>& keys,
                              const Extractor& extractor, int k,
                              const std::vector<double>& fpr_targets,
                              ThresholdMode mode = ThresholdMode::StrictGreater) {
  if (videos.empty()) throw ConfigError("evaluate_corpus: empty corpus");
  if (videos.size() != keys.size())
    throw ConfigError("evaluate_corpus: videos/keys count mismatch");
  CorpusSummary s;
  s.count = static_cast<int>(videos.size());
  std::vector<int> matches(videos.size());
  for (std::size_t i = 0; i < videos.size(); ++i) {
    auto soft = extract(extractor, videos[i]);
    auto voted = majority_vote(soft);
    matches[i] = match_count(voted, keys[i]);
    s.mean_bit_accuracy += static_cast<double>(matches[i]) / k;
  }
  s.mean_bit_accuracy /= s.count;
  for (double target : fpr_targets) {
    const int tau = detection_threshold(k, target, mode);
    int hits = 0;
    for (int m : matches)
      hits += mode == ThresholdMode::StrictGreater ? (m > tau) : (m >= tau);
    s.tpr_at_fpr.emplace_back(target, static_cast<double>(hits) / s.count);
  }
  return s;
}

}  // namespace vidsig
