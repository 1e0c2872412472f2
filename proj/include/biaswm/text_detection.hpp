#pragma once
// Watermark detection from a token sequence alone.
//
// The streaming detector sums delta over the first occurrence of every token
// and fires at the first position where at least lambda distinct tokens have
// been seen and the running sum reaches |S| * eps^2 * tau_text. The count
// baseline instead reports the fraction of distinct tokens whose perturbation
// is positive.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "biaswm/core_watermark.hpp"
#include "biaswm/error.hpp"
#include "biaswm/parallel.hpp"
#include "biaswm/report.hpp"
#include "biaswm/stats.hpp"
#include "biaswm/tokens.hpp"
#include "biaswm/toy_lm.hpp"

namespace biaswm {

struct TextDetectConfig {
  std::size_t lambda = 20;
  double tau_text = 0.5;
  std::size_t min_distinct_report = 20;
  /// Count baseline fires when the green fraction reaches 1/2 + count_margin.
  double count_margin = 0.1;
};

enum class Detector { inner_product, count };

inline const char* to_string(Detector d) { return d == Detector::inner_product ? "inner_product" : "count"; }

namespace detail {

inline void validate_text_config(const TextDetectConfig& cfg) {
  require(cfg.lambda >= 1, "TextDetectConfig: lambda must be >= 1");
  require(cfg.min_distinct_report >= 1, "TextDetectConfig: min_distinct_report must be >= 1");
}

template <PerturbationKey K>
void check_alphabet(const DistinctView& view, const K& key) {
  require_dims(view.n, key.size(), "text alphabet vs key");
}

}  // namespace detail

template <PerturbationKey K>
DetectionReport text_detect(const DistinctView& view, const K& key, const TextDetectConfig& cfg = {}) {
  detail::validate_text_config(cfg);
  detail::check_alphabet(view, key);
  const double eps_sq = key.epsilon() * key.epsilon();

  DetectionReport report;
  double count = 0.0;
  for (std::size_t i = 0; i < view.tokens.size(); ++i) {
    count += key.delta_at(view.tokens[i]);
    const std::size_t distinct = i + 1;
    const double bar = static_cast<double>(distinct) * eps_sq * cfg.tau_text;
    if (!report.trigger_index && distinct >= cfg.lambda && count >= bar) {
      report.trigger_index = view.positions[i];
      report.trigger_score = count;
      report.trigger_threshold = bar;
    }
  }
  report.score = count;
  report.distinct_tokens = view.tokens.size();
  report.threshold = static_cast<double>(view.tokens.size()) * eps_sq * cfg.tau_text;
  report.decision = report.trigger_index.has_value();

  if (view.tokens.size() < cfg.lambda) report.diagnostics.emplace_back(diag::kInsufficientDistinct);
  if (key.epsilon() == 0.0) {
    report.decision = false;
    report.trigger_index.reset();
    report.trigger_score.reset();
    report.trigger_threshold.reset();
    report.diagnostics.emplace_back(diag::kDegenerateKey);
  }
  return report;
}

template <PerturbationKey K>
DetectionReport text_detect(const TokenSequence& text, const K& key, const TextDetectConfig& cfg = {}) {
  return text_detect(distinct_view(text), key, cfg);
}

template <PerturbationKey K>
DetectionReport count_detect(const DistinctView& view, const K& key, const TextDetectConfig& cfg = {}) {
  detail::validate_text_config(cfg);
  detail::check_alphabet(view, key);
  std::size_t green = 0;
  for (Token t : view.tokens) green += key.delta_at(t) > 0.0 ? 1 : 0;

  DetectionReport report;
  report.distinct_tokens = view.tokens.size();
  report.score = view.tokens.empty() ? 0.0 : static_cast<double>(green) / static_cast<double>(view.tokens.size());
  report.threshold = 0.5 + cfg.count_margin;
  report.decision = report.score >= report.threshold && view.tokens.size() >= cfg.lambda;
  if (view.tokens.size() < cfg.lambda) report.diagnostics.emplace_back(diag::kInsufficientDistinct);
  if (key.epsilon() == 0.0) {
    report.decision = false;
    report.diagnostics.emplace_back(diag::kDegenerateKey);
  }
  return report;
}

template <PerturbationKey K>
DetectionReport count_detect(const TokenSequence& text, const K& key, const TextDetectConfig& cfg = {}) {
  return count_detect(distinct_view(text), key, cfg);
}

/// Final score of a detector, skipping the report bookkeeping.
template <PerturbationKey K>
double detector_score(Detector detector, const DistinctView& view, const K& key) {
  if (detector == Detector::inner_product) {
    double count = 0.0;
    for (Token t : view.tokens) count += key.delta_at(t);
    return count;
  }
  if (view.tokens.empty()) return 0.0;
  std::size_t green = 0;
  for (Token t : view.tokens) green += key.delta_at(t) > 0.0 ? 1 : 0;
  return static_cast<double>(green) / static_cast<double>(view.tokens.size());
}

/// Source of independent fresh keys: key i uses seed derive_seed(seed, i).
struct KeySampler {
  std::size_t n = 0;
  double epsilon = 1.0;
  std::uint64_t seed = 0;

  LazyKey key(std::size_t i) const { return LazyKey(n, epsilon, derive_seed(seed, i)); }
};

/// Null scores from (fresh key, fixed text) pairs: trial i scores
/// texts[i % texts.size()] against sampler.key(i).
inline std::vector<double> null_scores(Detector detector, std::span<const DistinctView> texts,
                                       const KeySampler& sampler, std::size_t trials) {
  detail::require(!texts.empty(), "null_scores: no null texts");
  for (const auto& v : texts) detail::require_dims(v.n, sampler.n, "null text alphabet vs key sampler");
  return parallel_map(trials, [&](std::size_t i) {
    return detector_score(detector, texts[i % texts.size()], sampler.key(i));
  });
}

inline void require_calibration_trials(double target_fpr, std::size_t trials) {
  detail::require(target_fpr > 0.0 && target_fpr < 1.0, "calibrate_threshold: target_fpr must be in (0,1)");
  if (static_cast<double>(trials) < 20.0 / target_fpr) {
    throw ParameterError("calibrate_threshold: insufficient trials for requested FPR (need >= " +
                         std::to_string(static_cast<std::size_t>(std::ceil(20.0 / target_fpr))) + ")");
  }
}

/// Score threshold whose empirical false-positive rate over the null pairs is
/// target_fpr (upper quantile of the null score distribution).
inline double calibrate_threshold(Detector detector, std::span<const DistinctView> null_texts,
                                  const KeySampler& sampler, double target_fpr, std::size_t trials) {
  require_calibration_trials(target_fpr, trials);
  return stats::upper_quantile_threshold(null_scores(detector, null_texts, sampler, trials), target_fpr);
}

/// Number of unwatermarked texts generated by the model-based calibration.
inline constexpr std::size_t kNullTextPool = 64;

/// Calibration against a null model: unwatermarked texts drawn from the toy
/// model with zero bias, each paired with fresh keys.
inline double calibrate_threshold(Detector detector, const ToyModelSpec& null_model, const KeySampler& sampler,
                                  double target_fpr, std::size_t trials, const GenerationConfig& gen = {}) {
  require_calibration_trials(target_fpr, trials);
  detail::require_dims(null_model.n, sampler.n, "null model alphabet vs key sampler");
  const ToyModel model(null_model);
  const auto bias = BiasVector::zeros(null_model.n);
  const std::size_t pool = std::min(trials, kNullTextPool);
  auto views = parallel_map(pool, [&](std::size_t i) {
    auto cfg = gen;
    cfg.sampler_seed = derive_seed(sampler.seed, 0x6e756c6cULL, i);
    return distinct_view(model.generate(bias, cfg));
  });
  return calibrate_threshold(detector, views, sampler, target_fpr, trials);
}

}  // namespace biaswm
