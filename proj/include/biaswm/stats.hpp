#pragma once
// Small descriptive statistics used by the detectors, checks and sweeps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "biaswm/error.hpp"

namespace biaswm::stats {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Unbiased sample variance (two-pass).
inline double variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return acc / static_cast<double>(xs.size() - 1);
}

inline double standard_error(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  return std::sqrt(variance(xs) / static_cast<double>(xs.size()));
}

/// sqrt(p(1-p)/trials).
inline double binomial_se(double p, std::size_t trials) {
  if (trials == 0) return 0.0;
  return std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(trials));
}

struct Interval {
  double low = 0.0;
  double high = 1.0;
};

/// Wilson score interval for a binomial proportion (default z for 95%).
inline Interval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054) {
  if (trials == 0) return {};
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
  const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n);
  const double low = successes == 0 ? 0.0 : std::max(0.0, centre - half);
  const double high = successes == trials ? 1.0 : std::min(1.0, centre + half);
  return {low, high};
}

/// Smallest threshold t drawn from `null_scores` such that the fraction of
/// null scores >= t does not exceed `target_fpr` (ties resolved upward).
/// With distinct scores exactly floor(target_fpr * N) of them clear t.
inline double upper_quantile_threshold(std::vector<double> null_scores, double target_fpr) {
  detail::require(!null_scores.empty(), "upper_quantile_threshold: no null scores");
  detail::require(target_fpr > 0.0 && target_fpr < 1.0, "upper_quantile_threshold: fpr must be in (0,1)");
  std::sort(null_scores.begin(), null_scores.end());
  const auto n = null_scores.size();
  const auto allowed = static_cast<std::size_t>(std::floor(target_fpr * static_cast<double>(n)));
  if (allowed == 0) {
    return std::nextafter(null_scores.back(), std::numeric_limits<double>::infinity());
  }
  double t = null_scores[n - allowed];
  // Ties at t would let more than `allowed` scores through; step above them.
  const auto at_or_above = static_cast<std::size_t>(
      null_scores.end() - std::lower_bound(null_scores.begin(), null_scores.end(), t));
  if (at_or_above > allowed) t = std::nextafter(t, std::numeric_limits<double>::infinity());
  return t;
}

/// Fraction of scores >= threshold.
inline double exceed_fraction(std::span<const double> scores, double threshold) {
  if (scores.empty()) return 0.0;
  const auto hits = std::count_if(scores.begin(), scores.end(), [&](double s) { return s >= threshold; });
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

/// Average ranks (1-based), ties share the mean rank.
inline std::vector<double> ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  std::vector<double> r(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  detail::require_dims(xs.size(), ys.size(), "pearson");
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

inline double spearman(std::span<const double> xs, std::span<const double> ys) {
  const auto rx = ranks(xs);
  const auto ry = ranks(ys);
  return pearson(rx, ry);
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
inline LinearFit linear_fit(std::span<const double> xs, std::span<const double> ys) {
  detail::require_dims(xs.size(), ys.size(), "linear_fit");
  detail::require(xs.size() >= 2, "linear_fit: need at least two points");
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  LinearFit fit;
  fit.slope = sxx == 0 ? 0.0 : sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double r = pearson(xs, ys);
  fit.r_squared = r * r;
  return fit;
}

}  // namespace biaswm::stats
