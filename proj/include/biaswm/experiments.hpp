#pragma once
// Desk-scale detectability, removal, substitution and scaling sweeps.
//
// Every response i at every sweep point uses the same key direction, sampler
// seed and prompt, derived from (master seed, i). Changing epsilon, k or rho
// only rescales or edits those draws, so curves share their randomness.
//
// Scores are computed against the unit-scale key direction. For epsilon > 0
// that only rescales the inner-product score and leaves the count score
// unchanged, so detection rates are identical to using the scaled key; at
// epsilon = 0 it gives a well-defined detector whose null and alternative
// coincide.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "biaswm/attacks.hpp"
#include "biaswm/core_watermark.hpp"
#include "biaswm/io.hpp"
#include "biaswm/parallel.hpp"
#include "biaswm/rng.hpp"
#include "biaswm/stats.hpp"
#include "biaswm/text_detection.hpp"
#include "biaswm/tokens.hpp"
#include "biaswm/toy_lm.hpp"

namespace biaswm {

inline constexpr int kSweepSchemaVersion = 1;

struct ExperimentConfig {
  std::vector<double> epsilons{0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0};
  std::size_t responses_per_point = 200;
  std::vector<double> target_fprs{0.01, 0.05};
  std::size_t min_distinct = 20;
  std::size_t null_trials = 10000;
  std::size_t holdout_trials = 10000;
  ToyModelSpec model{};
  std::size_t max_tokens = 300;
  double temperature = 0.9;
  TextDetectConfig text{};
  std::vector<double> attack_ks{1.0, 2.0, 5.0};
  std::vector<double> rhos{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<std::size_t> lengths{50, 100, 200, 300};
  std::size_t quality_contexts = kQualityContexts;
  std::size_t quality_keys = 8;
  std::size_t certify_steps = 64;
  CertificateBounds bounds{};
  std::uint64_t seed = 0;
};

struct SweepRow {
  std::string sweep;
  double epsilon = 0.0;
  std::string attack = "none";
  double magnitude = 0.0;
  std::size_t max_tokens = 0;
  std::string detector;
  double fpr_target = 0.0;
  double threshold = 0.0;
  double tpr = 0.0;
  double holdout_fpr = 0.0;
  std::size_t responses = 0;
  std::size_t kept = 0;
  double filtered_fraction = 0.0;
  double mean_distinct_tokens = 0.0;
  double mean_quality_proxy = 0.0;
  double mean_l2 = 0.0;
  double empirical_delta = 0.0;
  std::size_t trials = 0;
  bool flagged = false;
};

inline void validate(const ExperimentConfig& cfg) {
  detail::require(!cfg.epsilons.empty(), "ExperimentConfig: epsilons must be non-empty");
  detail::require(!cfg.target_fprs.empty(), "ExperimentConfig: target_fprs must be non-empty");
  detail::require(!cfg.attack_ks.empty(), "ExperimentConfig: attack_ks must be non-empty");
  detail::require(!cfg.rhos.empty(), "ExperimentConfig: rhos must be non-empty");
  detail::require(!cfg.lengths.empty(), "ExperimentConfig: lengths must be non-empty");
  detail::require(cfg.responses_per_point >= 1, "ExperimentConfig: responses_per_point must be >= 1");
  detail::require(cfg.max_tokens >= 1, "ExperimentConfig: max_tokens must be >= 1");
  for (double e : cfg.epsilons) detail::require(std::isfinite(e) && e >= 0.0, "ExperimentConfig: epsilon must be >= 0");
  for (double k : cfg.attack_ks) detail::require(std::isfinite(k) && k >= 0.0, "ExperimentConfig: k must be >= 0");
  for (double r : cfg.rhos) detail::require(r >= 0.0 && r <= 1.0, "ExperimentConfig: rho must be in [0,1]");
  for (auto len : cfg.lengths) detail::require(len >= 1, "ExperimentConfig: lengths must be >= 1");
  for (double f : cfg.target_fprs) {
    require_calibration_trials(f, cfg.null_trials);
    detail::require(cfg.holdout_trials >= 1, "ExperimentConfig: holdout_trials must be >= 1");
  }
  validate(cfg.model);
}

// ---------------------------------------------------------------------------
// seeds

namespace seeds {
inline constexpr std::uint64_t kKey = 0x6b6579;
inline constexpr std::uint64_t kSampler = 0x73616d70;
inline constexpr std::uint64_t kPrompt = 0x70726f6d;
inline constexpr std::uint64_t kNoise = 0x6e6f6973;
inline constexpr std::uint64_t kSubstitute = 0x73756273;
inline constexpr std::uint64_t kNull = 0x6e756c6c;
inline constexpr std::uint64_t kHoldout = 0x686f6c64;
inline constexpr std::uint64_t kQuality = 0x7175616c;
inline constexpr std::uint64_t kCertify = 0x63657274;
}  // namespace seeds

inline std::uint64_t response_key_seed(std::uint64_t master, std::size_t i) {
  return derive_seed(master, seeds::kKey, i);
}

// ---------------------------------------------------------------------------
// responses

struct Response {
  TokenSequence prompt;
  TokenSequence text;
};

/// Prompt of context_order tokens for response i.
inline TokenSequence response_prompt(const ToyModelSpec& spec, std::uint64_t master, std::size_t i) {
  TokenSequence p;
  p.n = spec.n;
  Stream rng(derive_seed(master, seeds::kPrompt, i));
  p.tokens.resize(spec.context_order);
  for (auto& t : p.tokens) t = static_cast<Token>(rng.below(spec.n));
  return p;
}

/// bias_of(i) gives the bias vector response i is generated under.
template <typename BiasFn>
std::vector<Response> generate_responses(const ToyModel& model, std::size_t count, std::size_t max_tokens,
                                         double temperature, std::uint64_t master, BiasFn&& bias_of) {
  return parallel_map(count, [&](std::size_t i) {
    GenerationConfig gen;
    gen.max_tokens = max_tokens;
    gen.temperature = temperature;
    gen.prompt = response_prompt(model.spec(), master, i);
    gen.sampler_seed = derive_seed(master, seeds::kSampler, i);
    const BiasVector bias = bias_of(i);
    Response r{gen.prompt, model.generate(bias, gen)};
    return r;
  });
}

/// Watermarked bias eps * u_i (+ k eps g_i) for response i, content bias 0.
inline BiasVector response_bias(std::size_t n, double eps, std::uint64_t master, std::size_t i, double k = 0.0) {
  BiasVector b{std::vector<double>(n), BiasLabel::watermarked};
  const auto key_seed = response_key_seed(master, i);
  for (std::size_t t = 0; t < n; ++t) b.values[t] = eps * normal_at(key_seed, t);
  if (k > 0.0) b = gaussian_perturb_attack(b, eps, k, derive_seed(master, seeds::kNoise, i));
  return b;
}

/// Fraction of sampled steps whose (generating, reference) distributions are
/// certified under cfg.bounds. bias_of(i) must match the generating bias.
template <typename BiasFn>
double empirical_delta(const ToyModel& model, const std::vector<Response>& responses,
                       const std::vector<std::size_t>& kept, std::size_t steps, double temperature,
                       CertificateBounds bounds, std::uint64_t seed, BiasFn&& bias_of) {
  if (kept.empty() || steps == 0) return 0.0;
  const auto reference = BiasVector::zeros(model.size());
  const auto certified = parallel_map(steps, [&](std::size_t s) {
    Stream rng(derive_seed(seed, s));
    const auto idx = kept[rng.below(kept.size())];
    const auto& r = responses[idx];
    const auto pos = static_cast<std::size_t>(rng.below(r.text.size()));
    std::vector<Token> ctx = r.prompt.tokens;
    ctx.insert(ctx.end(), r.text.tokens.begin(), r.text.tokens.begin() + static_cast<std::ptrdiff_t>(pos));
    const BiasVector bias = bias_of(idx);
    const auto p = model.step_distribution(bias.values, ctx, temperature);
    const auto q = model.step_distribution(reference.values, ctx, temperature);
    return certify_entropy_quality(p, q, bounds).satisfied ? 1 : 0;
  });
  double hits = 0;
  for (int c : certified) hits += c;
  return hits / static_cast<double>(steps);
}

// ---------------------------------------------------------------------------
// point evaluation

struct PointInput {
  std::string sweep;
  double epsilon = 0.0;
  std::string attack = "none";
  double magnitude = 0.0;
  std::size_t max_tokens = 0;
  std::vector<DistinctView> views;
  double mean_quality_proxy = 0.0;
  double mean_l2 = 0.0;
  double empirical_delta = 0.0;
};

inline std::vector<std::size_t> kept_indices(const std::vector<DistinctView>& views, std::size_t min_distinct) {
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (views[i].tokens.size() >= min_distinct) kept.push_back(i);
  }
  return kept;
}

/// Calibrate each detector at each target FPR on fresh-key nulls over the kept
/// responses, then measure TPR against each response's own key direction and
/// the realized FPR on an independent held-out null set.
inline std::vector<SweepRow> evaluate_point(const PointInput& in, const ExperimentConfig& cfg) {
  const std::size_t n = cfg.model.n;
  const auto kept = kept_indices(in.views, cfg.min_distinct);
  std::vector<DistinctView> kept_views;
  kept_views.reserve(kept.size());
  double distinct_sum = 0.0;
  for (auto i : kept) {
    kept_views.push_back(in.views[i]);
    distinct_sum += static_cast<double>(in.views[i].tokens.size());
  }

  SweepRow base;
  base.sweep = in.sweep;
  base.epsilon = in.epsilon;
  base.attack = in.attack;
  base.magnitude = in.magnitude;
  base.max_tokens = in.max_tokens;
  base.responses = in.views.size();
  base.kept = kept.size();
  base.filtered_fraction = 1.0 - static_cast<double>(kept.size()) / static_cast<double>(in.views.size());
  base.mean_distinct_tokens = kept.empty() ? 0.0 : distinct_sum / static_cast<double>(kept.size());
  base.mean_quality_proxy = in.mean_quality_proxy;
  base.mean_l2 = in.mean_l2;
  base.empirical_delta = in.empirical_delta;
  base.trials = kept.size();
  base.flagged = kept.empty();

  std::vector<SweepRow> rows;
  for (Detector det : {Detector::inner_product, Detector::count}) {
    std::vector<double> scores;
    std::vector<double> nulls;
    std::vector<double> holdout;
    if (!kept.empty()) {
      scores = parallel_map(kept.size(), [&](std::size_t j) {
        return detector_score(det, kept_views[j], LazyKey(n, 1.0, response_key_seed(cfg.seed, kept[j])));
      });
      nulls = null_scores(det, kept_views, KeySampler{n, 1.0, derive_seed(cfg.seed, seeds::kNull)}, cfg.null_trials);
      holdout = null_scores(det, kept_views, KeySampler{n, 1.0, derive_seed(cfg.seed, seeds::kHoldout)},
                            cfg.holdout_trials);
    }
    for (double fpr : cfg.target_fprs) {
      SweepRow row = base;
      row.detector = to_string(det);
      row.fpr_target = fpr;
      if (!kept.empty()) {
        row.threshold = stats::upper_quantile_threshold(nulls, fpr);
        row.tpr = stats::exceed_fraction(scores, row.threshold);
        row.holdout_fpr = stats::exceed_fraction(holdout, row.threshold);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// sweeps

/// Mean KL(q || p) over contexts, averaged over the first quality_keys
/// response biases of a point.
template <typename BiasFn>
double point_quality(const ToyModel& model, const ExperimentConfig& cfg, BiasFn&& bias_of) {
  const std::size_t keys = std::min(cfg.quality_keys, cfg.responses_per_point);
  if (keys == 0) return 0.0;
  const auto reference = BiasVector::zeros(model.size());
  const auto kl = parallel_map(keys, [&](std::size_t i) {
    return quality_proxy(model, reference, bias_of(i), cfg.temperature, derive_seed(cfg.seed, seeds::kQuality, i),
                         cfg.quality_contexts);
  });
  return stats::mean(kl);
}

template <typename BiasFn>
double point_l2(std::size_t count, BiasFn&& bias_of) {
  if (count == 0) return 0.0;
  const auto norms = parallel_map(count, [&](std::size_t i) { return l2_norm(bias_of(i).values); });
  return stats::mean(norms);
}

inline std::vector<DistinctView> views_of(const std::vector<Response>& responses) {
  std::vector<DistinctView> out;
  out.reserve(responses.size());
  for (const auto& r : responses) out.push_back(distinct_view(r.text));
  return out;
}

inline std::vector<SweepRow> run_detectability_sweep(const ExperimentConfig& cfg) {
  validate(cfg);
  const ToyModel model(cfg.model);
  const std::size_t n = cfg.model.n;
  std::vector<SweepRow> rows;
  for (double eps : cfg.epsilons) {
    auto bias_of = [&](std::size_t i) { return response_bias(n, eps, cfg.seed, i); };
    const auto responses =
        generate_responses(model, cfg.responses_per_point, cfg.max_tokens, cfg.temperature, cfg.seed, bias_of);
    PointInput in;
    in.sweep = "detect";
    in.epsilon = eps;
    in.max_tokens = cfg.max_tokens;
    in.views = views_of(responses);
    in.mean_quality_proxy = point_quality(model, cfg, bias_of);
    in.mean_l2 = point_l2(std::min(cfg.quality_keys, cfg.responses_per_point), bias_of);
    in.empirical_delta = empirical_delta(model, responses, kept_indices(in.views, cfg.min_distinct),
                                         cfg.certify_steps, cfg.temperature, cfg.bounds,
                                         derive_seed(cfg.seed, seeds::kCertify), bias_of);
    auto point = evaluate_point(in, cfg);
    rows.insert(rows.end(), point.begin(), point.end());
  }
  return rows;
}

inline std::vector<SweepRow> run_removal_sweep(const ExperimentConfig& cfg) {
  validate(cfg);
  const ToyModel model(cfg.model);
  const std::size_t n = cfg.model.n;
  std::vector<SweepRow> rows;
  for (double k : cfg.attack_ks) {
    for (double eps : cfg.epsilons) {
      auto bias_of = [&](std::size_t i) { return response_bias(n, eps, cfg.seed, i, k); };
      const auto responses =
          generate_responses(model, cfg.responses_per_point, cfg.max_tokens, cfg.temperature, cfg.seed, bias_of);
      PointInput in;
      in.sweep = "remove";
      in.epsilon = eps;
      in.attack = to_string(AttackKind::gaussian_perturb);
      in.magnitude = k;
      in.max_tokens = cfg.max_tokens;
      in.views = views_of(responses);
      in.mean_quality_proxy = point_quality(model, cfg, bias_of);
      in.mean_l2 = point_l2(std::min(cfg.quality_keys, cfg.responses_per_point), bias_of);
      in.empirical_delta = empirical_delta(model, responses, kept_indices(in.views, cfg.min_distinct),
                                           cfg.certify_steps, cfg.temperature, cfg.bounds,
                                           derive_seed(cfg.seed, seeds::kCertify), bias_of);
      auto point = evaluate_point(in, cfg);
      rows.insert(rows.end(), point.begin(), point.end());
    }
  }
  return rows;
}

inline std::vector<SweepRow> run_substitution_sweep(const ExperimentConfig& cfg) {
  validate(cfg);
  const ToyModel model(cfg.model);
  const std::size_t n = cfg.model.n;
  std::vector<SweepRow> rows;
  for (double eps : cfg.epsilons) {
    auto bias_of = [&](std::size_t i) { return response_bias(n, eps, cfg.seed, i); };
    const auto responses =
        generate_responses(model, cfg.responses_per_point, cfg.max_tokens, cfg.temperature, cfg.seed, bias_of);
    const double quality = point_quality(model, cfg, bias_of);
    const double l2 = point_l2(std::min(cfg.quality_keys, cfg.responses_per_point), bias_of);
    const double delta =
        empirical_delta(model, responses, kept_indices(views_of(responses), cfg.min_distinct), cfg.certify_steps,
                        cfg.temperature, cfg.bounds, derive_seed(cfg.seed, seeds::kCertify), bias_of);
    for (double rho : cfg.rhos) {
      PointInput in;
      in.sweep = "substitute";
      in.epsilon = eps;
      in.attack = to_string(AttackKind::token_substitute);
      in.magnitude = rho;
      in.max_tokens = cfg.max_tokens;
      in.views = parallel_map(responses.size(), [&](std::size_t i) {
        return distinct_view(token_substitute_attack(responses[i].text, rho, derive_seed(cfg.seed, seeds::kSubstitute, i)));
      });
      in.mean_quality_proxy = quality;
      in.mean_l2 = l2;
      in.empirical_delta = delta;
      auto point = evaluate_point(in, cfg);
      rows.insert(rows.end(), point.begin(), point.end());
    }
  }
  return rows;
}

/// Miss rate of the streaming detector (its own lambda / tau_text rule, no
/// calibration) for every (epsilon, response length). Shorter responses are
/// prefixes of the longest one.
inline std::vector<SweepRow> run_scaling_sweep(const ExperimentConfig& cfg) {
  validate(cfg);
  const ToyModel model(cfg.model);
  const std::size_t n = cfg.model.n;
  const std::size_t longest = *std::max_element(cfg.lengths.begin(), cfg.lengths.end());
  std::vector<SweepRow> rows;
  for (double eps : cfg.epsilons) {
    auto bias_of = [&](std::size_t i) { return response_bias(n, eps, cfg.seed, i); };
    const auto responses =
        generate_responses(model, cfg.responses_per_point, longest, cfg.temperature, cfg.seed, bias_of);
    for (std::size_t len : cfg.lengths) {
      struct Outcome {
        bool hit;
        std::size_t distinct;
      };
      const auto outcomes = parallel_map(responses.size(), [&](std::size_t i) {
        TokenSequence prefix;
        prefix.n = n;
        prefix.tokens.assign(responses[i].text.tokens.begin(),
                             responses[i].text.tokens.begin() + static_cast<std::ptrdiff_t>(len));
        const auto view = distinct_view(prefix);
        const auto report = text_detect(view, LazyKey(n, eps, response_key_seed(cfg.seed, i)), cfg.text);
        return Outcome{report.decision, view.tokens.size()};
      });
      SweepRow row;
      row.sweep = "scaling";
      row.epsilon = eps;
      row.max_tokens = len;
      row.detector = "streaming";
      row.responses = responses.size();
      row.kept = responses.size();
      row.trials = responses.size();
      double hits = 0.0, distinct = 0.0;
      for (const auto& o : outcomes) {
        hits += o.hit ? 1.0 : 0.0;
        distinct += static_cast<double>(o.distinct);
      }
      row.tpr = hits / static_cast<double>(responses.size());
      row.mean_distinct_tokens = distinct / static_cast<double>(responses.size());
      row.threshold = cfg.text.tau_text * eps * eps;
      rows.push_back(row);
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// analysis helpers

struct ScalingFit {
  stats::LinearFit eps4;  // log miss vs eps^4 * mean distinct
  stats::LinearFit eps2;  // log miss vs eps^2 * mean distinct
  std::size_t points = 0;
};

/// Fit log(miss rate) against eps^4 |U| and eps^2 |U| over points with
/// 0 < miss < 1.
inline ScalingFit fit_scaling(const std::vector<SweepRow>& rows) {
  std::vector<double> x4, x2, y;
  for (const auto& r : rows) {
    if (r.sweep != "scaling") continue;
    const double miss = 1.0 - r.tpr;
    if (miss <= 0.0 || miss >= 1.0) continue;
    const double e2 = r.epsilon * r.epsilon;
    x4.push_back(e2 * e2 * r.mean_distinct_tokens);
    x2.push_back(e2 * r.mean_distinct_tokens);
    y.push_back(std::log(miss));
  }
  ScalingFit fit;
  fit.points = y.size();
  if (y.size() >= 2) {
    fit.eps4 = stats::linear_fit(x4, y);
    fit.eps2 = stats::linear_fit(x2, y);
  }
  return fit;
}

// ---------------------------------------------------------------------------
// CSV

inline std::vector<std::string> sweep_header() {
  return {"schema_version", "sweep",        "epsilon",           "attack",
          "magnitude",      "max_tokens",   "detector",          "fpr_target",
          "threshold",      "tpr",          "holdout_fpr",       "responses",
          "kept",           "filtered_fraction", "mean_distinct_tokens", "mean_quality_proxy",
          "mean_l2",        "empirical_delta",   "trials",            "flagged"};
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  io::CsvWriter csv(sweep_header());
  const auto num = io::format_number;
  for (const auto& r : rows) {
    csv.row({std::to_string(kSweepSchemaVersion), r.sweep, num(r.epsilon), r.attack, num(r.magnitude),
             std::to_string(r.max_tokens), r.detector, num(r.fpr_target), num(r.threshold), num(r.tpr),
             num(r.holdout_fpr), std::to_string(r.responses), std::to_string(r.kept), num(r.filtered_fraction),
             num(r.mean_distinct_tokens), num(r.mean_quality_proxy), num(r.mean_l2), num(r.empirical_delta),
             std::to_string(r.trials), r.flagged ? "1" : "0"});
  }
  return csv.str();
}

inline std::vector<SweepRow> parse_sweep_csv(std::string_view text) {
  const auto table = io::parse_csv(text);
  if (table.empty()) throw FormatError("sweep csv: empty file");
  const auto header = sweep_header();
  if (table.front() != header) throw FormatError("sweep csv: unexpected header");
  std::vector<SweepRow> rows;
  auto to_d = [](const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw FormatError("sweep csv: bad number '" + s + "'");
    return v;
  };
  auto to_z = [&](const std::string& s) { return static_cast<std::size_t>(to_d(s)); };
  for (std::size_t i = 1; i < table.size(); ++i) {
    const auto& c = table[i];
    if (c.size() != header.size()) throw FormatError("sweep csv: row " + std::to_string(i) + " has wrong width");
    if (c[0] != std::to_string(kSweepSchemaVersion)) throw FormatError("sweep csv: unsupported schema_version");
    SweepRow r;
    r.sweep = c[1];
    r.epsilon = to_d(c[2]);
    r.attack = c[3];
    r.magnitude = to_d(c[4]);
    r.max_tokens = to_z(c[5]);
    r.detector = c[6];
    r.fpr_target = to_d(c[7]);
    r.threshold = to_d(c[8]);
    r.tpr = to_d(c[9]);
    r.holdout_fpr = to_d(c[10]);
    r.responses = to_z(c[11]);
    r.kept = to_z(c[12]);
    r.filtered_fraction = to_d(c[13]);
    r.mean_distinct_tokens = to_d(c[14]);
    r.mean_quality_proxy = to_d(c[15]);
    r.mean_l2 = to_d(c[16]);
    r.empirical_delta = to_d(c[17]);
    r.trials = to_z(c[18]);
    r.flagged = c[19] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// config JSON

inline io::json config_to_json(const ExperimentConfig& cfg) {
  return io::json{{"epsilons", cfg.epsilons},
                  {"responses_per_point", cfg.responses_per_point},
                  {"target_fprs", cfg.target_fprs},
                  {"min_distinct", cfg.min_distinct},
                  {"null_trials", cfg.null_trials},
                  {"holdout_trials", cfg.holdout_trials},
                  {"model", io::spec_to_json(cfg.model)},
                  {"max_tokens", cfg.max_tokens},
                  {"temperature", cfg.temperature},
                  {"lambda", cfg.text.lambda},
                  {"tau_text", cfg.text.tau_text},
                  {"count_margin", cfg.text.count_margin},
                  {"attack_ks", cfg.attack_ks},
                  {"rhos", cfg.rhos},
                  {"lengths", cfg.lengths},
                  {"quality_contexts", cfg.quality_contexts},
                  {"quality_keys", cfg.quality_keys},
                  {"certify_steps", cfg.certify_steps},
                  {"c1_max", cfg.bounds.c1_max},
                  {"c2_min", cfg.bounds.c2_min},
                  {"seed", cfg.seed}};
}

inline ExperimentConfig config_from_json(const io::json& j, ExperimentConfig cfg = {}) {
  constexpr std::string_view what = "experiment config";
  if (!j.is_object()) throw FormatError("experiment config: expected an object");
  using io::detail::maybe;
  maybe(j, "epsilons", cfg.epsilons, what);
  maybe(j, "responses_per_point", cfg.responses_per_point, what);
  maybe(j, "target_fprs", cfg.target_fprs, what);
  maybe(j, "min_distinct", cfg.min_distinct, what);
  maybe(j, "null_trials", cfg.null_trials, what);
  maybe(j, "holdout_trials", cfg.holdout_trials, what);
  if (j.contains("model")) cfg.model = io::spec_from_json(j.at("model"));
  maybe(j, "max_tokens", cfg.max_tokens, what);
  maybe(j, "temperature", cfg.temperature, what);
  maybe(j, "lambda", cfg.text.lambda, what);
  maybe(j, "tau_text", cfg.text.tau_text, what);
  maybe(j, "count_margin", cfg.text.count_margin, what);
  maybe(j, "attack_ks", cfg.attack_ks, what);
  maybe(j, "rhos", cfg.rhos, what);
  maybe(j, "lengths", cfg.lengths, what);
  maybe(j, "quality_contexts", cfg.quality_contexts, what);
  maybe(j, "quality_keys", cfg.quality_keys, what);
  maybe(j, "certify_steps", cfg.certify_steps, what);
  maybe(j, "c1_max", cfg.bounds.c1_max, what);
  maybe(j, "c2_min", cfg.bounds.c2_min, what);
  maybe(j, "seed", cfg.seed, what);
  return cfg;
}

}  // namespace biaswm
