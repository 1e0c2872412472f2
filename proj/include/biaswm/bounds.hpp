#pragma once
// Monte Carlo checks of the concentration facts and bounds the watermark's
// guarantees rest on. Each check returns a BoundCheckResult comparing an
// empirical rate (or mean) with the analytic bound.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "biaswm/attacks.hpp"
#include "biaswm/core_watermark.hpp"
#include "biaswm/parallel.hpp"
#include "biaswm/rng.hpp"
#include "biaswm/stats.hpp"
#include "biaswm/text_detection.hpp"
#include "biaswm/toy_lm.hpp"

namespace biaswm {

enum class BoundKind {
  upper,   // satisfied when empirical <= analytic_bound
  lower,   // satisfied when empirical >= analytic_bound
  report,  // no bound applies; recorded for context
};

inline const char* to_string(BoundKind k) {
  switch (k) {
    case BoundKind::upper: return "upper";
    case BoundKind::lower: return "lower";
    case BoundKind::report: return "report";
  }
  return "report";
}

struct BoundCheckResult {
  std::string name;
  std::map<std::string, double> params;
  double empirical = 0.0;
  double analytic_bound = 0.0;
  bool satisfied = false;
  std::size_t trials = 0;
  BoundKind kind = BoundKind::upper;
  double standard_error = 0.0;
};

namespace detail {

inline BoundCheckResult finish_rate(std::string name, std::map<std::string, double> params, std::size_t hits,
                                    std::size_t trials, double bound) {
  BoundCheckResult r;
  r.name = std::move(name);
  r.params = std::move(params);
  r.trials = trials;
  r.empirical = trials ? static_cast<double>(hits) / static_cast<double>(trials) : 0.0;
  r.analytic_bound = bound;
  r.standard_error = stats::binomial_se(r.empirical, trials);
  r.kind = BoundKind::upper;
  r.satisfied = r.empirical <= r.analytic_bound;
  return r;
}

template <typename Pred>
std::size_t count_hits(std::size_t trials, Pred&& pred) {
  const auto hits = parallel_map(trials, [&](std::size_t i) { return pred(i) ? 1 : 0; });
  std::size_t total = 0;
  for (int h : hits) total += static_cast<std::size_t>(h);
  return total;
}

}  // namespace detail

/// Pr[||x||^2 outside (n(1-c), n(1+c))] for x standard normal in R^n, against
/// 2 exp(-n c^2 / 8).
inline BoundCheckResult check_gaussian_norm_tail(std::size_t n, double c, std::size_t trials, std::uint64_t seed) {
  detail::require(n >= 1, "check_gaussian_norm_tail: n must be >= 1");
  detail::require(c > 0.0 && c < 1.0, "check_gaussian_norm_tail: c must be in (0,1)");
  const auto dn = static_cast<double>(n);
  const auto hits = detail::count_hits(trials, [&](std::size_t i) {
    Stream rng(derive_seed(seed, i));
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double x = rng.normal();
      sq += x * x;
    }
    return sq <= dn * (1 - c) || sq >= dn * (1 + c);
  });
  return detail::finish_rate("gaussian_norm_tail", {{"n", dn}, {"c", c}}, hits, trials,
                             2.0 * std::exp(-dn * c * c / 8.0));
}

/// Pr[|X| >= t] for X ~ N(0, sigma^2), against 2 exp(-t^2 / (2 sigma^2)).
inline BoundCheckResult check_gaussian_tail(double sigma, double t, std::size_t trials, std::uint64_t seed) {
  detail::require(sigma > 0.0, "check_gaussian_tail: sigma must be > 0");
  detail::require(t >= 0.0, "check_gaussian_tail: t must be >= 0");
  const auto hits = detail::count_hits(trials, [&](std::size_t i) {
    return std::abs(sigma * normal_at(seed, i)) >= t;
  });
  return detail::finish_rate("gaussian_tail", {{"sigma", sigma}, {"t", t}}, hits, trials,
                             2.0 * std::exp(-t * t / (2.0 * sigma * sigma)));
}

/// Pr[|X - E X| >= delta] for X a sum of k i.i.d. Uniform[a,b], against
/// 2 exp(-delta^2 / sum (b-a)^2).
inline BoundCheckResult check_hoeffding(std::size_t k, double a, double b, double delta, std::size_t trials,
                                        std::uint64_t seed) {
  detail::require(k >= 1, "check_hoeffding: k must be >= 1");
  detail::require(b > a, "check_hoeffding: need a < b");
  detail::require(delta >= 0.0, "check_hoeffding: delta must be >= 0");
  const double expected = static_cast<double>(k) * 0.5 * (a + b);
  const auto hits = detail::count_hits(trials, [&](std::size_t i) {
    Stream rng(derive_seed(seed, i));
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += a + (b - a) * rng.uniform();
    return std::abs(sum - expected) >= delta;
  });
  const double spread = static_cast<double>(k) * (b - a) * (b - a);
  return detail::finish_rate("hoeffding", {{"k", static_cast<double>(k)}, {"a", a}, {"b", b}, {"delta", delta}},
                             hits, trials, 2.0 * std::exp(-delta * delta / spread));
}

/// Union bound used for text soundness: sum over i in [lambda, d] of
/// 2 exp(-i tau^2 eps^2 / divisor). divisor = 1 is the form stated with the
/// soundness proof; divisor = 2 is what the Gaussian tail fact gives for
/// N(0, i eps^2) at i tau eps^2.
inline double text_soundness_bound(std::size_t lambda, std::size_t distinct, double tau, double eps,
                                   double divisor = 1.0) {
  double total = 0.0;
  for (std::size_t i = std::max<std::size_t>(lambda, 1); i <= distinct; ++i) {
    total += 2.0 * std::exp(-static_cast<double>(i) * tau * tau * eps * eps / divisor);
  }
  return total;
}

/// False-positive rate of the streaming text detector on one fixed text with
/// `distinct` distinct tokens, over fresh keys.
inline BoundCheckResult check_text_soundness(std::size_t lambda, double tau_text, double eps, std::size_t distinct,
                                             std::size_t n, std::size_t keys, std::uint64_t seed) {
  detail::require(distinct <= n, "check_text_soundness: distinct must be <= n");
  // Fixed text: `distinct` different tokens chosen before any key is drawn.
  TokenSequence text;
  text.n = n;
  {
    std::vector<Token> all(n);
    std::iota(all.begin(), all.end(), Token{0});
    Stream rng(derive_seed(seed, 0x74657874ULL));
    for (std::size_t i = 0; i < distinct; ++i) {
      std::swap(all[i], all[i + rng.below(n - i)]);
    }
    text.tokens.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(distinct));
  }
  const auto view = distinct_view(text);
  TextDetectConfig cfg;
  cfg.lambda = lambda;
  cfg.tau_text = tau_text;
  const KeySampler sampler{n, eps, derive_seed(seed, 0x6b657973ULL)};
  const auto hits = detail::count_hits(keys, [&](std::size_t i) {
    return text_detect(view, sampler.key(i), cfg).decision;
  });
  auto r = detail::finish_rate("text_soundness",
                               {{"lambda", static_cast<double>(lambda)},
                                {"tau_text", tau_text},
                                {"epsilon", eps},
                                {"distinct", static_cast<double>(distinct)},
                                {"n", static_cast<double>(n)},
                                {"gaussian_tail_union_bound", text_soundness_bound(lambda, distinct, tau_text, eps, 2.0)}},
                               hits, keys, text_soundness_bound(lambda, distinct, tau_text, eps));
  return r;
}

/// Pr[sum of i fresh perturbations >= i tau eps^2] at a single step i.
inline BoundCheckResult check_text_step_tail(std::size_t i, double tau_text, double eps, std::size_t keys,
                                             std::uint64_t seed) {
  detail::require(i >= 1, "check_text_step_tail: i must be >= 1");
  const double bar = static_cast<double>(i) * tau_text * eps * eps;
  const auto hits = detail::count_hits(keys, [&](std::size_t k) {
    const auto s = derive_seed(seed, k);
    double sum = 0.0;
    for (std::size_t j = 0; j < i; ++j) sum += eps * normal_at(s, j);
    return sum >= bar;
  });
  const double di = static_cast<double>(i);
  return detail::finish_rate(
      "text_step_tail",
      {{"i", di}, {"tau_text", tau_text}, {"epsilon", eps},
       {"gaussian_tail_bound", 2.0 * std::exp(-di * tau_text * tau_text * eps * eps / 2.0)}},
      hits, keys, 2.0 * std::exp(-di * tau_text * tau_text * eps * eps));
}

/// Miss-rate bound of the streaming detector on watermarked text:
/// 2 exp(-|U| eps^4 tau^2 / (2 sqrt(lambda))), averaged over responses.
inline double text_miss_bound(std::size_t distinct, double eps, double tau_text, std::size_t lambda) {
  const double e4 = eps * eps * eps * eps;
  return std::min(1.0, 2.0 * std::exp(-static_cast<double>(distinct) * e4 * tau_text * tau_text /
                                      (2.0 * std::sqrt(static_cast<double>(lambda)))));
}

struct LemmaCheckConfig {
  ToyModelSpec model{.n = 64, .context_order = 1, .logit_scale = 0.1};
  double epsilon = 0.1;
  /// Gaussian attack strength (k * eps noise) applied on top of the watermark.
  double attack_k = 0.0;
  double temperature = 1.0;
  CertificateBounds bounds{};
  std::size_t trials = 10000;
  std::uint64_t seed = 0;
};

/// Mean perturbation of the sampled token over certified steps, compared with
/// the exact per-step expectation (enumeration over the alphabet) and with
/// both candidate lower bounds c1 eps^2/c2 - alpha and c2 eps^2/c1 - alpha.
inline BoundCheckResult check_expected_val_lemma(const LemmaCheckConfig& cfg) {
  const ToyModel model(cfg.model);
  const std::size_t n = cfg.model.n;

  struct Step {
    bool certified = false;
    double exact = 0.0;
    double sampled = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    double eta = 0.0;
  };
  const auto steps = parallel_map(cfg.trials, [&](std::size_t i) {
    const auto key = setup(n, cfg.epsilon, derive_seed(cfg.seed, 0x6b6579ULL, i));
    const auto original = BiasVector::zeros(n);
    const auto marked = watermark(original, key);
    const auto z = gaussian_perturb_attack(marked, cfg.epsilon, cfg.attack_k, derive_seed(cfg.seed, 0x61747461ULL, i));
    Stream rng(derive_seed(cfg.seed, 0x73746570ULL, i));
    std::vector<Token> ctx(std::max<std::size_t>(cfg.model.context_order, 1));
    for (auto& t : ctx) t = static_cast<Token>(rng.below(n));

    const auto p = model.step_distribution(z.values, ctx, cfg.temperature);
    const auto q = model.step_distribution(original.values, ctx, cfg.temperature);
    Step s;
    const auto cert = certify_entropy_quality(p, q, cfg.bounds);
    if (!cert.satisfied) return s;
    s.certified = true;
    s.c1 = cert.c1;
    s.c2 = cert.c2;
    s.eta = approximation_error(p, q, z.values, original.values);

    // Expectation and sample under p restricted to its significant set.
    double mass = 0.0;
    for (Token t : p.significant_set) mass += p.probs[t];
    double acc = 0.0;
    for (Token t : p.significant_set) acc += p.probs[t] / mass * key.delta_at(t);
    s.exact = acc;
    const double u = rng.uniform() * mass;
    double run = 0.0;
    Token pick = p.significant_set.back();
    for (Token t : p.significant_set) {
      run += p.probs[t];
      if (u < run) {
        pick = t;
        break;
      }
    }
    s.sampled = key.delta_at(pick);
    return s;
  });

  std::vector<double> sampled, exact, diff;
  double c1 = 0.0, c2 = std::numeric_limits<double>::infinity(), eta = 0.0;
  for (const auto& s : steps) {
    if (!s.certified) continue;
    sampled.push_back(s.sampled);
    exact.push_back(s.exact);
    diff.push_back(s.sampled - s.exact);
    c1 = std::max(c1, s.c1);
    c2 = std::min(c2, s.c2);
    eta = std::max(eta, s.eta);
  }
  if (sampled.empty()) throw ParameterError("check_expected_val_lemma: no certified steps found");

  const double eps2 = cfg.epsilon * cfg.epsilon;
  const double alpha = c2 * eta * cfg.epsilon * std::sqrt(2.0 / std::numbers::pi) / c1;
  const double stated_form = c1 * eps2 / c2 - alpha;   // c1 eps^2 / c2 - alpha
  const double derived_form = c2 * eps2 / c1 - alpha;  // c2 eps^2 / c1 - alpha
  const double mean_sampled = stats::mean(sampled);
  const double mean_exact = stats::mean(exact);
  const double se_diff = stats::standard_error(diff);
  const double agreement = se_diff > 0 ? (mean_sampled - mean_exact) / se_diff : 0.0;

  BoundCheckResult r;
  r.name = "expected_val_lemma";
  r.kind = BoundKind::lower;
  r.trials = sampled.size();
  r.empirical = mean_sampled;
  r.analytic_bound = derived_form;
  r.standard_error = stats::standard_error(sampled);
  r.satisfied = mean_sampled >= derived_form;
  r.params = {{"n", static_cast<double>(n)},
              {"epsilon", cfg.epsilon},
              {"attack_k", cfg.attack_k},
              {"logit_scale", cfg.model.logit_scale},
              {"steps_drawn", static_cast<double>(cfg.trials)},
              {"certified_fraction", static_cast<double>(sampled.size()) / static_cast<double>(cfg.trials)},
              {"c1", c1},
              {"c2", c2},
              {"eta", eta},
              {"alpha", alpha},
              {"exact_mean", mean_exact},
              {"sampled_minus_exact_z", agreement},
              {"bound_c1eps2_over_c2", stated_form},
              {"bound_c2eps2_over_c1", derived_form},
              {"holds_c1eps2_over_c2", mean_sampled >= stated_form ? 1.0 : 0.0},
              {"holds_c2eps2_over_c1", mean_sampled >= derived_form ? 1.0 : 0.0}};
  return r;
}

/// Upper bound on Pr[(v - u).v < tau eps^2 n] for ||u|| = norm, minimized over
/// the free constant f. Restricted to f >= sqrt(2 pi), where
/// Pr[Z > f] <= exp(-f^2/2) / (2 pi) is valid.
inline double removal_probability_bound(std::size_t n, double eps, double norm, double tau) {
  const double dn = static_cast<double>(n);
  const double spread = norm / std::sqrt(dn);
  double best = 1.0;
  for (double f = std::sqrt(2.0 * std::numbers::pi); f <= 60.0; f += 0.01) {
    const double c = 1.0 - tau - spread * f / (eps * std::sqrt(dn));
    const double first = c > 0 ? 2.0 * std::exp(-dn * c * c / 8.0) : 1.0;
    best = std::min(best, first + std::exp(-f * f / 2.0) / (2.0 * std::numbers::pi));
  }
  return std::min(best, 1.0);
}

enum class AttackDirection { independent, oracle };

/// Removal geometry: v ~ N(0, eps^2 I) plays w* - w_wat, u the attacker's
/// shift. For each norm, estimates Pr[(v - u).v < tau eps^2 n] with u along a
/// random direction independent of v, and with u along v itself (requires
/// knowing v).
inline std::vector<BoundCheckResult> check_unremovability_geometry(std::size_t n, double eps,
                                                                   const std::vector<double>& norms, double tau,
                                                                   std::size_t trials, std::uint64_t seed) {
  detail::require(n >= 2, "check_unremovability_geometry: n must be >= 2");
  detail::require(eps > 0.0, "check_unremovability_geometry: eps must be > 0");
  const double bar = tau * eps * eps * static_cast<double>(n);
  struct Sample {
    double v_sq = 0.0;
    double proj = 0.0;  // unit(d) . v
  };
  const auto samples = parallel_map(trials, [&](std::size_t i) {
    Stream rng(derive_seed(seed, i));
    double v_sq = 0.0, d_sq = 0.0, dv = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = eps * rng.normal();
      const double d = rng.normal();
      v_sq += v * v;
      d_sq += d * d;
      dv += d * v;
    }
    return Sample{v_sq, dv / std::sqrt(d_sq)};
  });

  const double budget = loss_budget(n, eps);
  std::vector<BoundCheckResult> out;
  for (double norm : norms) {
    std::size_t random_hits = 0, oracle_hits = 0;
    for (const auto& s : samples) {
      random_hits += (s.v_sq - norm * s.proj) < bar ? 1 : 0;
      oracle_hits += (s.v_sq - norm * std::sqrt(s.v_sq)) < bar ? 1 : 0;
    }
    const std::map<std::string, double> params{{"n", static_cast<double>(n)},
                                               {"epsilon", eps},
                                               {"tau", tau},
                                               {"attack_norm", norm},
                                               {"loss_budget", budget},
                                               {"norm_over_budget", norm / budget}};
    out.push_back(detail::finish_rate("unremovability_geometry.independent", params, random_hits, trials,
                                      removal_probability_bound(n, eps, norm, tau)));
    auto oracle = detail::finish_rate("unremovability_geometry.oracle", params, oracle_hits, trials, 1.0);
    oracle.kind = BoundKind::report;
    oracle.satisfied = true;
    out.push_back(std::move(oracle));
  }
  return out;
}

/// The checks `verify-bounds` runs by default.
inline std::vector<BoundCheckResult> default_bound_suite(std::uint64_t seed) {
  std::vector<BoundCheckResult> out;
  out.push_back(check_gaussian_norm_tail(100, 0.5, 100000, derive_seed(seed, 1)));
  out.push_back(check_gaussian_norm_tail(1024, 0.2, 10000, derive_seed(seed, 2)));
  out.push_back(check_gaussian_norm_tail(10, 0.999, 100000, derive_seed(seed, 3)));
  out.push_back(check_gaussian_tail(1.0, 0.0, 10000, derive_seed(seed, 4)));
  out.push_back(check_gaussian_tail(1.0, 2.0, 1000000, derive_seed(seed, 5)));
  out.push_back(check_gaussian_tail(1.0, 5.0, 1000000, derive_seed(seed, 6)));
  out.push_back(check_hoeffding(10, 0.0, 1.0, 1.0, 100000, derive_seed(seed, 7)));
  out.push_back(check_hoeffding(100, -1.0, 1.0, 10.0, 100000, derive_seed(seed, 8)));
  out.push_back(check_hoeffding(50, 0.0, 2.0, 5.0, 100000, derive_seed(seed, 9)));
  for (double tau : {0.25, 0.5}) {
    for (double eps : {0.5, 1.0}) {
      out.push_back(check_text_soundness(100, tau, eps, 500, 10000, 10000, derive_seed(seed, 10, tau * 100, eps * 100)));
    }
  }
  out.push_back(check_expected_val_lemma({.seed = derive_seed(seed, 11)}));
  for (std::size_t n : {256u, 1024u, 4096u}) {
    const double budget = loss_budget(n, 0.5);
    for (double tau : {0.5, 0.9, 1.1}) {
      auto geo = check_unremovability_geometry(n, 0.5, {0.0, 0.5 * budget, budget, 2.0 * budget}, tau, 2000,
                                               derive_seed(seed, 12, n, tau * 10));
      out.insert(out.end(), geo.begin(), geo.end());
    }
  }
  return out;
}

}  // namespace biaswm
