#pragma once
// Seeded synthetic autoregressive language model.
//
// Next-token probabilities are softmax((logits(context) + bias) / temperature).
// Logits are pseudo-random standard normal deviates, scaled by logit_scale, keyed
// by a hash of (base_seed, last context_order tokens), so they are reproducible
// and need no training. With support_size K > 0 each context also draws a set
// of K candidate tokens; all other tokens sit at off_support_logit, far below
// the significance floor. That gives low per-step entropy with high diversity
// across steps, which is how real models behave on open-ended prompts.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "biaswm/core_watermark.hpp"
#include "biaswm/error.hpp"
#include "biaswm/rng.hpp"
#include "biaswm/tokens.hpp"

namespace biaswm {

struct ToyModelSpec {
  std::size_t n = 10000;
  std::size_t context_order = 2;
  double logit_scale = 0.3;
  std::uint64_t base_seed = 0;
  double significance_floor = 1e-9;
  /// 0 = every token is a candidate at every step.
  std::size_t support_size = 0;
  double off_support_logit = -40.0;

  friend bool operator==(const ToyModelSpec&, const ToyModelSpec&) = default;
};

struct GenerationConfig {
  std::size_t max_tokens = 300;
  double temperature = 0.9;
  TokenSequence prompt;
  std::uint64_t sampler_seed = 0;
};

struct EntropyCertificate {
  double c1 = 0.0;
  double c2 = 0.0;
  bool satisfied = false;
  std::size_t significant_count = 0;
};

struct StepDistribution {
  std::vector<double> probs;
  std::vector<Token> significant_set;
  std::optional<EntropyCertificate> entropy_cert;
};

inline void validate(const ToyModelSpec& spec) {
  detail::require(spec.n >= 2, "ToyModelSpec: n must be >= 2");
  detail::require(spec.n <= kMaxAlphabet, "ToyModelSpec: n must be <= 2^20");
  detail::require(std::isfinite(spec.logit_scale) && spec.logit_scale >= 0.0,
                  "ToyModelSpec: logit_scale must be >= 0");
  detail::require(spec.significance_floor > 0.0 && spec.significance_floor < 1.0,
                  "ToyModelSpec: significance_floor must be in (0,1)");
  detail::require(spec.support_size <= spec.n, "ToyModelSpec: support_size must be <= n");
  detail::require(std::isfinite(spec.off_support_logit), "ToyModelSpec: off_support_logit must be finite");
}

namespace detail {

/// Logits come from a fixed pool of standard normal deviates; a hash of
/// (context, token) selects the pool entry. The pool bounds |logit|, which the
/// rejection sampler needs.
inline constexpr std::size_t kPoolBits = 16;
inline constexpr std::size_t kPoolSize = std::size_t{1} << kPoolBits;

/// Rejection sampling is used while its worst-case acceptance exp(-bound)
/// stays above exp(-kMaxRejectionExponent).
inline constexpr double kMaxRejectionExponent = 4.0;

struct NormalPool {
  std::vector<double> values;
  double max_abs = 0.0;

  explicit NormalPool(std::uint64_t seed) : values(kPoolSize) {
    Stream stream(derive_seed(seed, 0x706f6f6cULL));
    for (auto& v : values) {
      v = stream.normal();
      max_abs = std::max(max_abs, std::abs(v));
    }
  }
};

}  // namespace detail

/// Cumulative weights exp((b - max b) / temperature) for proposing tokens in
/// proportion to their bias alone.
class BiasTable {
 public:
  BiasTable(std::span<const double> bias, double temperature) : temperature_(temperature) {
    detail::require(temperature > 0.0 && std::isfinite(temperature), "temperature must be > 0");
    detail::require(all_finite(bias), "bias vector has non-finite components");
    shift_ = *std::max_element(bias.begin(), bias.end());
    weights_.resize(bias.size());
    cumulative_.resize(bias.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < bias.size(); ++i) {
      weights_[i] = std::exp((bias[i] - shift_) / temperature);
      acc += weights_[i];
      cumulative_[i] = acc;
    }
  }

  double total() const noexcept { return cumulative_.back(); }
  double weight(std::size_t token) const noexcept { return weights_[token]; }
  double temperature() const noexcept { return temperature_; }
  double shift() const noexcept { return shift_; }
  std::size_t size() const noexcept { return weights_.size(); }

  /// Token with probability weight/total.
  Token propose(double u01) const noexcept {
    const double target = u01 * total();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    const auto idx = static_cast<std::size_t>(it - cumulative_.begin());
    return static_cast<Token>(std::min(idx, cumulative_.size() - 1));
  }

 private:
  double temperature_;
  double shift_ = 0.0;
  std::vector<double> weights_;
  std::vector<double> cumulative_;
};

enum class SamplingPath { automatic, full_scan };

class ToyModel {
 public:
  explicit ToyModel(ToyModelSpec spec)
      : spec_(spec), pool_((validate(spec), std::make_shared<detail::NormalPool>(spec.base_seed))) {}

  const ToyModelSpec& spec() const noexcept { return spec_; }
  std::size_t size() const noexcept { return spec_.n; }
  double logit_bound() const noexcept { return spec_.logit_scale * pool_->max_abs; }

  /// Hash of the last context_order tokens of `context`.
  std::uint64_t context_hash(std::span<const Token> context) const noexcept {
    const std::size_t m = std::min(spec_.context_order, context.size());
    std::uint64_t h = derive_seed(spec_.base_seed, 0x63747874ULL, m);
    for (std::size_t i = context.size() - m; i < context.size(); ++i) {
      h = mix64(h ^ (static_cast<std::uint64_t>(context[i]) + 1) * kGoldenGamma);
    }
    return h;
  }

  /// Candidate set of a context (deduplicated, unordered). Empty when
  /// support_size == 0, meaning every token is a candidate.
  std::vector<Token> support(std::uint64_t h) const {
    std::vector<Token> out;
    if (spec_.support_size == 0) return out;
    out.reserve(spec_.support_size);
    const auto seed = derive_seed(h, 0x73757070ULL);
    for (std::size_t j = 0; j < spec_.support_size; ++j) {
      const auto t = static_cast<Token>(SplitMix64::at(seed, j) % spec_.n);
      if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    }
    return out;
  }

  /// Candidate logit of token t under context hash h (ignores the support set).
  double candidate_logit(std::uint64_t h, Token t) const noexcept {
    const auto idx = SplitMix64::at(h, t) & (detail::kPoolSize - 1);
    return spec_.logit_scale * pool_->values[idx];
  }

  std::vector<double> logits(std::span<const Token> context) const {
    const auto h = context_hash(context);
    std::vector<double> out(spec_.n);
    if (spec_.support_size == 0) {
      for (std::size_t t = 0; t < spec_.n; ++t) out[t] = candidate_logit(h, static_cast<Token>(t));
    } else {
      std::fill(out.begin(), out.end(), spec_.off_support_logit);
      for (Token t : support(h)) out[t] = candidate_logit(h, t);
    }
    return out;
  }

  StepDistribution step_distribution(std::span<const double> bias, std::span<const Token> context,
                                     double temperature) const {
    detail::require(temperature > 0.0 && std::isfinite(temperature), "temperature must be > 0");
    detail::require_dims(bias.size(), spec_.n, "step_distribution(bias)");
    auto z = logits(context);
    for (std::size_t t = 0; t < z.size(); ++t) z[t] = (z[t] + bias[t]) / temperature;
    const double top = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (auto& v : z) {
      v = std::exp(v - top);
      total += v;
    }
    StepDistribution dist;
    dist.probs = std::move(z);
    for (auto& v : dist.probs) v /= total;
    for (std::size_t t = 0; t < dist.probs.size(); ++t) {
      if (dist.probs[t] >= spec_.significance_floor) dist.significant_set.push_back(static_cast<Token>(t));
    }
    return dist;
  }

  /// Draw one token from step_distribution(bias, context, table.temperature()).
  Token sample_next(const BiasTable& table, std::span<const double> bias, std::uint64_t h, Stream& rng,
                    SamplingPath path = SamplingPath::automatic) const {
    const double temp = table.temperature();
    if (path == SamplingPath::automatic && spec_.support_size > 0) return sample_support(table, bias, h, rng);
    if (path == SamplingPath::automatic && logit_bound() / temp <= detail::kMaxRejectionExponent) {
      return sample_rejection(table, h, rng);
    }
    return sample_scan(bias, h, temp, rng);
  }

  TokenSequence generate(const BiasVector& bias, const GenerationConfig& cfg,
                         SamplingPath path = SamplingPath::automatic) const {
    detail::require(cfg.max_tokens >= 1, "generate: max_tokens must be >= 1");
    detail::require_dims(bias.size(), spec_.n, "generate(bias)");
    if (!cfg.prompt.empty()) {
      detail::require(cfg.prompt.n == spec_.n, "generate: prompt alphabet differs from model");
      validate_tokens(cfg.prompt);
    }
    const BiasTable table(bias.values, cfg.temperature);
    Stream rng(cfg.sampler_seed);
    std::vector<Token> context = cfg.prompt.tokens;
    context.reserve(context.size() + cfg.max_tokens);
    for (std::size_t i = 0; i < cfg.max_tokens; ++i) {
      const auto h = context_hash(context);
      context.push_back(sample_next(table, bias.values, h, rng, path));
    }
    TokenSequence out;
    out.n = spec_.n;
    out.tokens.assign(context.end() - static_cast<std::ptrdiff_t>(cfg.max_tokens), context.end());
    return out;
  }

 private:
  // Proposal ~ exp(b/T); accept with exp((logit - bound)/T). Exact because
  // every logit is at most the bound.
  Token sample_rejection(const BiasTable& table, std::uint64_t h, Stream& rng) const {
    const double bound = logit_bound();
    const double temp = table.temperature();
    for (;;) {
      const Token t = table.propose(rng.uniform());
      if (spec_.logit_scale == 0.0) return t;
      const double accept = std::exp((candidate_logit(h, t) - bound) / temp);
      if (rng.uniform() < accept) return t;
    }
  }

  // Mixture of the candidate set (enumerated) and the off-support background
  // (proposal ~ exp(b/T), rejecting candidates).
  Token sample_support(const BiasTable& table, std::span<const double> bias, std::uint64_t h,
                       Stream& rng) const {
    const double temp = table.temperature();
    const auto cand = support(h);
    std::vector<double> w(cand.size());
    double support_mass = 0.0;
    double support_bias_mass = 0.0;
    for (std::size_t j = 0; j < cand.size(); ++j) {
      w[j] = std::exp((candidate_logit(h, cand[j]) + bias[cand[j]] - table.shift()) / temp);
      support_mass += w[j];
      support_bias_mass += table.weight(cand[j]);
    }
    const double background =
        std::exp(spec_.off_support_logit / temp) * std::max(table.total() - support_bias_mass, 0.0);
    const double u = rng.uniform() * (support_mass + background);
    if (u < support_mass || background <= 0.0) {
      double acc = 0.0;
      for (std::size_t j = 0; j < cand.size(); ++j) {
        acc += w[j];
        if (u < acc) return cand[j];
      }
      return cand.back();
    }
    for (;;) {
      const Token t = table.propose(rng.uniform());
      if (std::find(cand.begin(), cand.end(), t) == cand.end()) return t;
    }
  }

  Token sample_scan(std::span<const double> bias, std::uint64_t h, double temp, Stream& rng) const {
    std::vector<double> z(spec_.n);
    if (spec_.support_size == 0) {
      for (std::size_t t = 0; t < spec_.n; ++t) z[t] = candidate_logit(h, static_cast<Token>(t));
    } else {
      std::fill(z.begin(), z.end(), spec_.off_support_logit);
      for (Token t : support(h)) z[t] = candidate_logit(h, t);
    }
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < z.size(); ++t) {
      z[t] = (z[t] + bias[t]) / temp;
      top = std::max(top, z[t]);
    }
    double total = 0.0;
    for (auto& v : z) {
      v = std::exp(v - top);
      total += v;
      v = total;
    }
    const double target = rng.uniform() * total;
    const auto it = std::upper_bound(z.begin(), z.end(), target);
    return static_cast<Token>(std::min<std::size_t>(static_cast<std::size_t>(it - z.begin()), spec_.n - 1));
  }

  ToyModelSpec spec_;
  std::shared_ptr<const detail::NormalPool> pool_;
};

// Free-function forms over a spec. Each builds the model's deviate pool, so
// prefer a ToyModel instance in loops.

inline std::vector<double> logits(const ToyModelSpec& spec, const TokenSequence& context) {
  return ToyModel(spec).logits(context.tokens);
}

inline StepDistribution step_distribution(const ToyModelSpec& spec, const BiasVector& bias,
                                          const TokenSequence& context, double temperature) {
  return ToyModel(spec).step_distribution(bias.values, context.tokens, temperature);
}

inline TokenSequence generate(const ToyModelSpec& spec, const BiasVector& bias, const GenerationConfig& cfg) {
  return ToyModel(spec).generate(bias, cfg);
}

struct CertificateBounds {
  double c1_max = 2.0;
  double c2_min = 0.5;
};

/// Tightest (c1, c2) for which p is c1-high-entropy and c2-high-quality
/// relative to the reference q, over p's significant set T:
///   c1 = max_T 1 / (|T| p_t),   c2 = min_T q_t / p_t.
/// Also checks 1/q_t <= c1 |T| / c2 on T, which must follow from the two.
inline EntropyCertificate certify_entropy_quality(const StepDistribution& p, const StepDistribution& q,
                                                  CertificateBounds bounds = {}) {
  detail::require_dims(p.probs.size(), q.probs.size(), "certify_entropy_quality");
  if (p.significant_set.empty()) throw ParameterError("certify_entropy_quality: empty significant set");
  const auto size_t_ = static_cast<double>(p.significant_set.size());
  double min_p = std::numeric_limits<double>::infinity();
  double min_ratio = std::numeric_limits<double>::infinity();
  for (Token t : p.significant_set) {
    min_p = std::min(min_p, p.probs[t]);
    min_ratio = std::min(min_ratio, q.probs[t] / p.probs[t]);
  }
  EntropyCertificate cert;
  cert.c1 = 1.0 / (size_t_ * min_p);
  cert.c2 = min_ratio;
  cert.significant_count = p.significant_set.size();
  cert.satisfied = cert.c1 <= bounds.c1_max && cert.c2 >= bounds.c2_min;

  if (cert.c2 > 0.0) {
    const double cap = cert.c1 * size_t_ / cert.c2;
    for (Token t : p.significant_set) {
      if (1.0 / q.probs[t] > cap * (1.0 + 1e-12)) {
        throw InvariantError("certify_entropy_quality: 1/q_t exceeds c1|T|/c2");
      }
    }
  }
  return cert;
}

/// KL(q || p) in nats, summed over tokens with q_t > 0.
inline double kl_divergence(std::span<const double> q, std::span<const double> p) {
  detail::require_dims(q.size(), p.size(), "kl_divergence");
  double acc = 0.0;
  for (std::size_t t = 0; t < q.size(); ++t) {
    if (q[t] > 0.0) acc += q[t] * std::log(q[t] / p[t]);
  }
  return std::max(acc, 0.0);
}

/// Largest |p_t/q_t - 1 - (z_t - w_t)| over p's significant set: the realized
/// error of the first-order approximation linking probability ratios to bias
/// shifts.
inline double approximation_error(const StepDistribution& p, const StepDistribution& q,
                                  std::span<const double> z, std::span<const double> w) {
  detail::require_dims(z.size(), w.size(), "approximation_error");
  double worst = 0.0;
  for (Token t : p.significant_set) {
    worst = std::max(worst, std::abs(p.probs[t] / q.probs[t] - 1.0 - (z[t] - w[t])));
  }
  return worst;
}

/// Random contexts of length context_order, used by the quality proxy.
inline std::vector<std::vector<Token>> sample_contexts(const ToyModelSpec& spec, std::size_t count,
                                                       std::uint64_t seed) {
  Stream rng(seed);
  std::vector<std::vector<Token>> out(count);
  for (auto& ctx : out) {
    ctx.resize(std::max<std::size_t>(spec.context_order, 1));
    for (auto& t : ctx) t = static_cast<Token>(rng.below(spec.n));
  }
  return out;
}

inline constexpr std::size_t kQualityContexts = 256;

/// Mean KL(q || p) between the reference model (bias `reference`) and the
/// candidate model (bias `candidate`) over sampled contexts.
inline double quality_proxy(const ToyModel& model, const BiasVector& reference, const BiasVector& candidate,
                            double temperature, std::uint64_t seed, std::size_t contexts = kQualityContexts) {
  const auto ctxs = sample_contexts(model.spec(), contexts, seed);
  double acc = 0.0;
  for (const auto& ctx : ctxs) {
    const auto q = model.step_distribution(reference.values, ctx, temperature);
    const auto p = model.step_distribution(candidate.values, ctx, temperature);
    acc += kl_divergence(q.probs, p.probs);
  }
  return acc / static_cast<double>(ctxs.size());
}

inline QualityLossReport quality_report(const ToyModel& model, const BiasVector& reference,
                                        const BiasVector& candidate, double temperature, std::uint64_t seed) {
  auto report = quality_loss(reference, candidate);
  report.kl_proxy = quality_proxy(model, reference, candidate, temperature, seed);
  return report;
}

}  // namespace biaswm
