#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "biaswm/error.hpp"

namespace biaswm {

using Token = std::uint32_t;

/// Ordered token ids over an alphabet of size n.
struct TokenSequence {
  std::vector<Token> tokens;
  std::size_t n = 0;

  std::size_t size() const noexcept { return tokens.size(); }
  bool empty() const noexcept { return tokens.empty(); }

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

inline void validate_tokens(const TokenSequence& text) {
  for (std::size_t i = 0; i < text.tokens.size(); ++i) {
    if (text.tokens[i] >= text.n) {
      throw ParameterError("token id out of range: " + std::to_string(text.tokens[i]) + " at position " +
                           std::to_string(i) + " (alphabet " + std::to_string(text.n) + ")");
    }
  }
}

/// First occurrences of each token, in order, with their positions.
struct DistinctView {
  std::vector<Token> tokens;
  std::vector<std::size_t> positions;
  std::size_t n = 0;
  std::size_t length = 0;
};

inline DistinctView distinct_view(const TokenSequence& text) {
  validate_tokens(text);
  DistinctView view;
  view.n = text.n;
  view.length = text.size();
  std::unordered_set<Token> seen;
  seen.reserve(text.size() * 2);
  for (std::size_t i = 0; i < text.tokens.size(); ++i) {
    if (seen.insert(text.tokens[i]).second) {
      view.tokens.push_back(text.tokens[i]);
      view.positions.push_back(i);
    }
  }
  return view;
}

inline std::size_t count_distinct(const TokenSequence& text) {
  return std::unordered_set<Token>(text.tokens.begin(), text.tokens.end()).size();
}

}  // namespace biaswm
