#pragma once
// Removal attacks and the removability game.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "biaswm/core_watermark.hpp"
#include "biaswm/error.hpp"
#include "biaswm/parallel.hpp"
#include "biaswm/rng.hpp"
#include "biaswm/stats.hpp"
#include "biaswm/tokens.hpp"

namespace biaswm {

enum class AttackKind { gaussian_perturb, token_substitute, custom_bias_edit };

inline const char* to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::gaussian_perturb: return "gaussian_perturb";
    case AttackKind::token_substitute: return "token_substitute";
    case AttackKind::custom_bias_edit: return "custom_bias_edit";
  }
  return "custom_bias_edit";
}

/// magnitude is k (noise std in units of epsilon) for gaussian_perturb and the
/// substituted fraction rho for token_substitute.
struct AttackSpec {
  AttackKind kind = AttackKind::gaussian_perturb;
  double magnitude = 0.0;
  std::uint64_t seed = 0;
};

inline void validate(const AttackSpec& spec) {
  detail::require(std::isfinite(spec.magnitude) && spec.magnitude >= 0.0, "AttackSpec: magnitude must be >= 0");
  if (spec.kind == AttackKind::token_substitute) {
    detail::require(spec.magnitude <= 1.0, "AttackSpec: rho must be in [0,1]");
  }
}

/// z = w_wat + N(0, (k eps)^2 I).
inline BiasVector gaussian_perturb_attack(const BiasVector& w_wat, double key_epsilon, double k, std::uint64_t seed) {
  detail::require(std::isfinite(k) && k >= 0.0, "gaussian_perturb_attack: k must be >= 0");
  detail::require(std::isfinite(key_epsilon) && key_epsilon >= 0.0, "gaussian_perturb_attack: epsilon must be >= 0");
  BiasVector z{w_wat.values, BiasLabel::adversarial};
  const double sigma = k * key_epsilon;
  if (sigma == 0.0) return z;
  for (std::size_t i = 0; i < z.values.size(); ++i) z.values[i] += sigma * normal_at(seed, i);
  return z;
}

/// Number of positions a substitution attack rewrites: ceil(rho * len).
inline std::size_t substitution_count(double rho, std::size_t length) {
  const double raw = rho * static_cast<double>(length);
  // rho * len can land a hair above an integer (0.3 * 10); do not round that up.
  return std::min(length, static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw))));
}

/// The positions a substitution attack rewrites: a uniformly random
/// ceil(rho*len)-subset, returned in draw order. For a fixed seed the sets are
/// nested in rho.
inline std::vector<std::size_t> substitution_positions(std::size_t length, double rho, std::uint64_t seed) {
  detail::require(std::isfinite(rho) && rho >= 0.0 && rho <= 1.0, "token_substitute_attack: rho must be in [0,1]");
  const std::size_t m = substitution_count(rho, length);
  std::vector<std::size_t> order(length);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Stream rng(derive_seed(seed, 0x7065726dULL));
  for (std::size_t i = 0; i < m; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(length - i));
    std::swap(order[i], order[j]);
  }
  order.resize(m);
  return order;
}

/// Replace the substitution_positions with uniform token ids. The token drawn
/// for a position does not depend on rho.
inline TokenSequence token_substitute_attack(const TokenSequence& text, double rho, std::uint64_t seed) {
  detail::require(text.n >= 1, "token_substitute_attack: empty alphabet");
  TokenSequence out = text;
  const auto token_seed = derive_seed(seed, 0x746f6b6eULL);
  for (std::size_t pos : substitution_positions(text.size(), rho, seed)) {
    Stream pick(derive_seed(token_seed, pos));
    out.tokens[pos] = static_cast<Token>(pick.below(text.n));
  }
  return out;
}

/// What an attacker may see: the watermarked biases and public parameters.
struct PublicParams {
  std::size_t n = 0;
  double epsilon = 0.0;
  double loss_budget = 0.0;
};

/// Attacker callback. Receives only public information and its own random
/// stream, and returns replacement biases of the same length.
using BiasAttacker = std::function<std::vector<double>(std::span<const double> w_wat, const PublicParams&, Stream&)>;

/// custom_bias_edit: run a user edit and check it stayed within the bias surface.
inline BiasVector custom_bias_edit(const BiasVector& w_wat, const PublicParams& params, const BiasAttacker& edit,
                                   std::uint64_t seed) {
  Stream rng(seed);
  BiasVector z{edit(w_wat.values, params, rng), BiasLabel::adversarial};
  detail::require_dims(z.size(), w_wat.size(), "custom_bias_edit result");
  if (!all_finite(z.values)) throw InvariantError("custom_bias_edit: attacker returned non-finite biases");
  return z;
}

inline BiasAttacker null_attacker() {
  return [](std::span<const double> w, const PublicParams&, Stream&) { return std::vector<double>(w.begin(), w.end()); };
}

inline BiasAttacker gaussian_attacker(double k) {
  return [k](std::span<const double> w, const PublicParams& pub, Stream& rng) {
    std::vector<double> z(w.begin(), w.end());
    for (auto& v : z) v += k * pub.epsilon * rng.normal();
    return z;
  };
}

/// How the challenger draws (w*, w_wat).
///  prior:     w* ~ N(0, sigma_c^2 I), w_wat = w* + delta.
///  posterior: w_wat ~ N(0, sigma_c^2 I), w* = w_wat - delta, so the
///             attacker's posterior over w* is exactly N(w_wat, eps^2 I).
enum class ContentMode { prior, posterior };

struct GameConfig {
  std::size_t n = 4096;
  double epsilon = 0.5;
  double content_sigma = 1.0;
  ContentMode mode = ContentMode::posterior;
  /// Defaults to loss_budget(n, epsilon) when <= 0.
  double budget = 0.0;
  WeightDetectConfig detect{};
  std::size_t trials = 1000;
  std::uint64_t seed = 0;
};

struct GameStats {
  std::size_t trials = 0;
  std::size_t wins = 0;
  std::size_t undetected = 0;
  double win_rate = 0.0;
  stats::Interval ci;
  double mean_attack_norm = 0.0;
  double mean_loss = 0.0;
  double budget = 0.0;
};

/// Seeds the game uses for trial `trial`. Exposed so tests can build an
/// attacker that cheats with knowledge of the key.
inline std::uint64_t game_key_seed(std::uint64_t game_seed, std::size_t trial) {
  return derive_seed(game_seed, 0x6b6579ULL, trial);
}

inline std::uint64_t game_content_seed(std::uint64_t game_seed, std::size_t trial) {
  return derive_seed(game_seed, 0x636f6e74ULL, trial);
}

/// Setup -> Watermark -> attack -> (not detected AND L2(w*, z) <= budget).
inline GameStats play_removability_game(const BiasAttacker& attacker, const GameConfig& cfg) {
  detail::require(cfg.trials >= 1, "play_removability_game: trials must be >= 1");
  validate_setup(cfg.n, cfg.epsilon);
  const double budget = cfg.budget > 0.0 ? cfg.budget : loss_budget(cfg.n, cfg.epsilon);
  const PublicParams pub{cfg.n, cfg.epsilon, budget};

  struct Trial {
    bool win = false;
    bool undetected = false;
    double attack_norm = 0.0;
    double loss = 0.0;
  };
  const auto results = parallel_map(cfg.trials, [&](std::size_t i) {
    const auto key = setup(cfg.n, cfg.epsilon, game_key_seed(cfg.seed, i));
    Stream content(game_content_seed(cfg.seed, i));
    BiasVector drawn{std::vector<double>(cfg.n), BiasLabel::original};
    for (auto& v : drawn.values) v = cfg.content_sigma * content.normal();

    BiasVector original;
    BiasVector marked;
    if (cfg.mode == ContentMode::prior) {
      original = drawn;
      marked = watermark(original, key);
    } else {
      marked = BiasVector{drawn.values, BiasLabel::watermarked};
      original = BiasVector{drawn.values, BiasLabel::original};
      for (std::size_t t = 0; t < cfg.n; ++t) original.values[t] -= key.delta()[t];
    }

    const auto z = custom_bias_edit(marked, pub, attacker, derive_seed(cfg.seed, 0x61747461ULL, i));
    const auto report = weight_detect(z, original, key, cfg.detect);
    Trial t;
    t.undetected = !report.decision;
    t.loss = l2_distance(original.values, z.values);
    t.attack_norm = l2_distance(z.values, marked.values);
    t.win = t.undetected && t.loss <= budget;
    return t;
  });

  GameStats out;
  out.trials = cfg.trials;
  out.budget = budget;
  for (const auto& t : results) {
    out.wins += t.win ? 1 : 0;
    out.undetected += t.undetected ? 1 : 0;
    out.mean_attack_norm += t.attack_norm;
    out.mean_loss += t.loss;
  }
  out.mean_attack_norm /= static_cast<double>(cfg.trials);
  out.mean_loss /= static_cast<double>(cfg.trials);
  out.win_rate = static_cast<double>(out.wins) / static_cast<double>(cfg.trials);
  out.ci = stats::wilson_interval(out.wins, cfg.trials);
  return out;
}

}  // namespace biaswm
