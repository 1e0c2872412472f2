#pragma once
// Gaussian bias watermark: key sampling, embedding, and weight-space detection.
//
// A key is a vector delta of n i.i.d. N(0, eps^2) components. Watermarking adds
// it to a bias vector. The weight detector, given a candidate c and the original
// x, accepts when (c - x) . delta >= tau * eps^2 * n and c stays within a norm
// ball around x + delta.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "biaswm/error.hpp"
#include "biaswm/report.hpp"
#include "biaswm/rng.hpp"

namespace biaswm {

inline constexpr std::size_t kMaxAlphabet = std::size_t{1} << 20;

enum class BiasLabel { original, watermarked, adversarial };

inline const char* to_string(BiasLabel label) {
  switch (label) {
    case BiasLabel::original: return "original";
    case BiasLabel::watermarked: return "watermarked";
    case BiasLabel::adversarial: return "adversarial";
  }
  return "original";
}

/// Last-layer biases of a model (or any content vector in R^n).
struct BiasVector {
  std::vector<double> values;
  BiasLabel label = BiasLabel::original;

  std::size_t size() const noexcept { return values.size(); }
  std::span<const double> view() const noexcept { return values; }

  static BiasVector zeros(std::size_t n, BiasLabel label = BiasLabel::original) {
    return {std::vector<double>(n, 0.0), label};
  }
};

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

/// Secret perturbation vector together with the parameters that regenerate it.
class WatermarkKey {
 public:
  WatermarkKey(std::vector<double> delta, double epsilon, std::uint64_t seed,
               std::string prng = kPrngName)
      : delta_(std::move(delta)), epsilon_(epsilon), seed_(seed), prng_(std::move(prng)) {
    detail::require(!delta_.empty(), "WatermarkKey: empty delta");
    detail::require(delta_.size() <= kMaxAlphabet, "WatermarkKey: n exceeds 2^20");
    detail::require(std::isfinite(epsilon_) && epsilon_ >= 0.0, "WatermarkKey: epsilon must be >= 0");
    detail::require(all_finite(delta_), "WatermarkKey: non-finite delta component");
  }

  std::size_t size() const noexcept { return delta_.size(); }
  double epsilon() const noexcept { return epsilon_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& prng() const noexcept { return prng_; }
  std::span<const double> delta() const noexcept { return delta_; }
  double delta_at(std::size_t token) const { return delta_[token]; }

  friend bool operator==(const WatermarkKey&, const WatermarkKey&) = default;

 private:
  std::vector<double> delta_;
  double epsilon_;
  std::uint64_t seed_;
  std::string prng_;
};

/// A key that evaluates components on demand; component i equals
/// setup(n, epsilon, seed).delta()[i] bit for bit.
class LazyKey {
 public:
  LazyKey(std::size_t n, double epsilon, std::uint64_t seed) noexcept
      : n_(n), epsilon_(epsilon), seed_(seed) {}

  std::size_t size() const noexcept { return n_; }
  double epsilon() const noexcept { return epsilon_; }
  std::uint64_t seed() const noexcept { return seed_; }
  double delta_at(std::size_t token) const noexcept { return epsilon_ * normal_at(seed_, token); }

 private:
  std::size_t n_;
  double epsilon_;
  std::uint64_t seed_;
};

/// Anything the text detectors can read perturbations from.
template <typename K>
concept PerturbationKey = requires(const K& key, std::size_t token) {
  { key.size() } -> std::convertible_to<std::size_t>;
  { key.epsilon() } -> std::convertible_to<double>;
  { key.delta_at(token) } -> std::convertible_to<double>;
};

enum class NormBound { eps_n, eps_sq_n };

struct WeightDetectConfig {
  double tau = 0.5;
  NormBound norm_bound = NormBound::eps_n;
  /// Replace tau*eps^2*n / the norm bound with fixed values when set.
  std::optional<double> threshold_override;
  std::optional<double> norm_bound_override;
};

struct QualityLossReport {
  double l2 = 0.0;
  std::optional<double> kl_proxy;
  std::optional<double> loss_budget;
};

// ---------------------------------------------------------------------------

inline void validate_setup(std::size_t n, double epsilon) {
  detail::require(n >= 1, "setup: n must be >= 1");
  detail::require(n <= kMaxAlphabet, "setup: n must be <= 2^20");
  detail::require(std::isfinite(epsilon) && epsilon >= 0.0, "setup: epsilon must be finite and >= 0");
}

/// Sample a key: delta[i] = epsilon * z_i with z_i standard normal from the
/// seeded stream. epsilon == 0 yields the all-zero key.
inline WatermarkKey setup(std::size_t n, double epsilon, std::uint64_t seed) {
  validate_setup(n, epsilon);
  std::vector<double> delta(n);
  for (std::size_t i = 0; i < n; ++i) delta[i] = epsilon * normal_at(seed, i);
  return WatermarkKey(std::move(delta), epsilon, seed);
}

/// Unit-scale key sharing the seed: setup(n, eps, s).delta == eps * direction(n, s).delta.
inline WatermarkKey key_direction(std::size_t n, std::uint64_t seed) { return setup(n, 1.0, seed); }

inline BiasVector watermark(const BiasVector& x, const WatermarkKey& key) {
  detail::require_dims(x.size(), key.size(), "watermark");
  BiasVector out{x.values, BiasLabel::watermarked};
  const auto delta = key.delta();
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += delta[i];
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  detail::require_dims(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double l2_distance(std::span<const double> a, std::span<const double> b) {
  detail::require_dims(a.size(), b.size(), "l2_distance");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

inline double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Removal budget l(n) = eps * n / sqrt(log2 n). Infinite for n == 1.
inline double loss_budget(std::size_t n, double epsilon) {
  if (n < 2) return std::numeric_limits<double>::infinity();
  return epsilon * static_cast<double>(n) / std::sqrt(std::log2(static_cast<double>(n)));
}

inline DetectionReport weight_detect(const BiasVector& c, const BiasVector& x, const WatermarkKey& key,
                                     const WeightDetectConfig& cfg = {}) {
  detail::require(cfg.tau > 0.0, "weight_detect: tau must be > 0");
  detail::require_dims(c.size(), key.size(), "weight_detect(candidate)");
  detail::require_dims(x.size(), key.size(), "weight_detect(original)");

  const double eps = key.epsilon();
  const auto n = static_cast<double>(key.size());
  const auto delta = key.delta();

  double inner = 0.0;
  double off_sq = 0.0;
  for (std::size_t i = 0; i < key.size(); ++i) {
    const double shift = c.values[i] - x.values[i];
    inner += shift * delta[i];
    const double off = shift - delta[i];
    off_sq += off * off;
  }

  DetectionReport report;
  report.score = inner;
  report.threshold = cfg.threshold_override.value_or(cfg.tau * eps * eps * n);
  report.norm = std::sqrt(off_sq);
  report.norm_bound = cfg.norm_bound_override.value_or(
      cfg.norm_bound == NormBound::eps_n ? 0.5 * eps * n : 0.5 * eps * eps * n);

  if (eps == 0.0) {
    report.decision = false;
    report.diagnostics.emplace_back(diag::kDegenerateKey);
    return report;
  }
  const bool inner_ok = report.score >= report.threshold;
  const bool norm_ok = *report.norm <= *report.norm_bound;
  report.decision = inner_ok && norm_ok;
  if (!inner_ok) report.diagnostics.emplace_back("inner product below threshold");
  if (!norm_ok) report.diagnostics.emplace_back("candidate outside norm bound");
  return report;
}

inline QualityLossReport quality_loss(const BiasVector& x, const BiasVector& y) {
  detail::require_dims(x.size(), y.size(), "quality_loss");
  return {l2_distance(x.values, y.values), std::nullopt, std::nullopt};
}

inline QualityLossReport quality_loss(const BiasVector& x, const BiasVector& y, const WatermarkKey& key) {
  detail::require_dims(x.size(), key.size(), "quality_loss");
  auto report = quality_loss(x, y);
  report.loss_budget = loss_budget(key.size(), key.epsilon());
  return report;
}

}  // namespace biaswm
