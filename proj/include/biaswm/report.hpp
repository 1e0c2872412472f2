#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace biaswm {

/// Outcome of any detector, weight-space or text-space.
struct DetectionReport {
  bool decision = false;
  /// Inner product (weights), accumulated perturbation (text) or green
  /// fraction (count baseline). Always the value over the full input.
  double score = 0.0;
  /// Threshold the final score is compared against.
  double threshold = 0.0;
  /// Weight detector only: ||c - (x + delta)|| and the bound it must meet.
  std::optional<double> norm;
  std::optional<double> norm_bound;
  /// Text detectors only.
  std::optional<std::size_t> distinct_tokens;
  /// Position where the streaming detector first fired, with the running
  /// score and threshold at that moment.
  std::optional<std::size_t> trigger_index;
  std::optional<double> trigger_score;
  std::optional<double> trigger_threshold;
  std::vector<std::string> diagnostics;
};

namespace diag {
inline constexpr const char* kDegenerateKey = "degenerate key";
inline constexpr const char* kInsufficientDistinct = "insufficient distinct tokens";
}  // namespace diag

}  // namespace biaswm
