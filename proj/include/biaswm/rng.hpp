#pragma once
// Seedable, counter-addressable random streams.
//
// Every random quantity in the library is drawn from SplitMix64, either as a
// sequential stream or by random access (`SplitMix64::at`). Random access lets
// the detectors evaluate a fresh key at a handful of token ids without
// materializing all n components, and it makes every draw reproducible from
// (seed, index) alone.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace biaswm {

/// Name recorded in key files. Bump the suffix if the sampler ever changes.
inline constexpr const char* kPrngName = "splitmix64-boxmuller/v1";

/// Largest |z| that `normal_at` can return: sqrt(-2 ln 2^-53).
inline constexpr double kMaxBoxMullerMagnitude = 8.5717;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

/// SplitMix64 (Steele, Lea, Flood 2014). Satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    state_ += kGoldenGamma;
    return mix64(state_);
  }

  /// The value the stream seeded with `seed` yields at position `index`.
  static constexpr result_type at(std::uint64_t seed, std::uint64_t index) noexcept {
    return mix64(seed + (index + 1) * kGoldenGamma);
  }

 private:
  std::uint64_t state_;
};

/// Uniform on (0, 1], 53 bits of resolution.
constexpr double to_unit_open0(std::uint64_t bits) noexcept {
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

/// Uniform on [0, 1).
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Box-Muller (cosine branch) from two 64-bit words.
inline double box_muller(std::uint64_t a, std::uint64_t b) noexcept {
  const double radius = std::sqrt(-2.0 * std::log(to_unit_open0(a)));
  return radius * std::cos(2.0 * std::numbers::pi * to_unit(b));
}

/// Standard normal deviate number `index` of the stream `seed`.
inline double normal_at(std::uint64_t seed, std::uint64_t index) noexcept {
  return box_muller(SplitMix64::at(seed, 2 * index), SplitMix64::at(seed, 2 * index + 1));
}

/// Derive an independent child seed from a parent seed and a tag.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) noexcept {
  return mix64(mix64(parent ^ 0x5851f42d4c957f2dULL) + mix64(tag + kGoldenGamma));
}

template <typename... Tags>
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag, Tags... rest) noexcept {
  return derive_seed(derive_seed(parent, tag), static_cast<std::uint64_t>(rest)...);
}

/// Sequential stream with the draws the library needs.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) noexcept : gen_(seed) {}

  std::uint64_t bits() noexcept { return gen_(); }
  double uniform() noexcept { return to_unit(gen_()); }

  double normal() noexcept {
    const auto a = gen_();
    const auto b = gen_();
    return box_muller(a, b);
  }

  /// Uniform integer in [0, bound), Lemire's nearly-divisionless method.
  std::uint64_t below(std::uint64_t bound) noexcept {
    __extension__ using u128 = unsigned __int128;
    if (bound <= 1) return 0;
    auto x = gen_();
    auto m = static_cast<u128>(x) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        x = gen_();
        m = static_cast<u128>(x) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  SplitMix64& engine() noexcept { return gen_; }

 private:
  SplitMix64 gen_;
};

}  // namespace biaswm
