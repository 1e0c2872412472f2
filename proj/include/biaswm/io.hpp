#pragma once
// File formats: key and bias envelopes, token text, reports, specs, CSV and
// JSON-lines output.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "biaswm/attacks.hpp"
#include "biaswm/bounds.hpp"
#include "biaswm/core_watermark.hpp"
#include "biaswm/error.hpp"
#include "biaswm/report.hpp"
#include "biaswm/text_detection.hpp"
#include "biaswm/tokens.hpp"
#include "biaswm/toy_lm.hpp"

namespace biaswm::io {

using json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

// ---------------------------------------------------------------------------
// base64 of little-endian doubles

namespace detail {

inline constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace detail

inline std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const auto b0 = static_cast<unsigned char>(bytes[i]);
    const auto b1 = static_cast<unsigned char>(bytes[i + 1]);
    const auto b2 = static_cast<unsigned char>(bytes[i + 2]);
    out += detail::kAlphabet[b0 >> 2];
    out += detail::kAlphabet[((b0 & 3) << 4) | (b1 >> 4)];
    out += detail::kAlphabet[((b1 & 15) << 2) | (b2 >> 6)];
    out += detail::kAlphabet[b2 & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const auto b0 = static_cast<unsigned char>(bytes[i]);
    out += detail::kAlphabet[b0 >> 2];
    out += detail::kAlphabet[(b0 & 3) << 4];
    out += "==";
  } else if (rest == 2) {
    const auto b0 = static_cast<unsigned char>(bytes[i]);
    const auto b1 = static_cast<unsigned char>(bytes[i + 1]);
    out += detail::kAlphabet[b0 >> 2];
    out += detail::kAlphabet[((b0 & 3) << 4) | (b1 >> 4)];
    out += detail::kAlphabet[(b1 & 15) << 2];
    out += '=';
  }
  return out;
}

inline std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw FormatError("base64: length is not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = text[i + static_cast<std::size_t>(j)];
      if (c == '=') {
        if (i + 4 != text.size() || j < 2) throw FormatError("base64: misplaced padding");
        v[j] = 0;
        ++pad;
      } else {
        if (pad) throw FormatError("base64: data after padding");
        v[j] = detail::decode_char(c);
        if (v[j] < 0) throw FormatError("base64: invalid character");
      }
    }
    const std::uint32_t word = (static_cast<std::uint32_t>(v[0]) << 18) | (static_cast<std::uint32_t>(v[1]) << 12) |
                               (static_cast<std::uint32_t>(v[2]) << 6) | static_cast<std::uint32_t>(v[3]);
    out += static_cast<char>((word >> 16) & 0xff);
    if (pad < 2) out += static_cast<char>((word >> 8) & 0xff);
    if (pad < 1) out += static_cast<char>(word & 0xff);
  }
  return out;
}

inline std::string encode_f64(std::span<const double> values) {
  std::string bytes(values.size() * 8, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) {
      bytes[i * 8 + static_cast<std::size_t>(b)] = static_cast<char>(bits & 0xff);
      bits >>= 8;
    }
  }
  return base64_encode(bytes);
}

inline std::vector<double> decode_f64(std::string_view text) {
  const auto bytes = base64_decode(text);
  if (bytes.size() % 8 != 0) throw FormatError("vector payload is not a whole number of f64 values");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b) {
      bits = (bits << 8) | static_cast<unsigned char>(bytes[i * 8 + static_cast<std::size_t>(b)]);
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

// ---------------------------------------------------------------------------
// files

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw FormatError("write failed: " + path);
}

inline json parse_json(std::string_view text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  }
}

namespace detail {

template <typename T>
T field(const json& j, const char* key, std::string_view what) {
  if (!j.is_object() || !j.contains(key)) throw FormatError(std::string(what) + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": bad field '" + key + "': " + e.what());
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out, std::string_view what) {
  if (j.contains(key)) out = field<T>(j, key, what);
}

inline void check_version(const json& j, std::string_view what) {
  const auto v = field<int>(j, "version", what);
  if (v != kFormatVersion) throw FormatError(std::string(what) + ": unsupported version " + std::to_string(v));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// key and bias envelopes

inline json key_to_json(const WatermarkKey& key) {
  return json{{"version", kFormatVersion},
              {"n", key.size()},
              {"epsilon", key.epsilon()},
              {"seed", key.seed()},
              {"prng", key.prng()},
              {"delta", encode_f64(key.delta())}};
}

inline WatermarkKey key_from_json(const json& j) {
  constexpr std::string_view what = "key file";
  detail::check_version(j, what);
  const auto n = detail::field<std::size_t>(j, "n", what);
  auto delta = decode_f64(detail::field<std::string>(j, "delta", what));
  if (delta.size() != n) throw FormatError("key file: delta length does not match n");
  try {
    return WatermarkKey(std::move(delta), detail::field<double>(j, "epsilon", what),
                        detail::field<std::uint64_t>(j, "seed", what), detail::field<std::string>(j, "prng", what));
  } catch (const ParameterError& e) {
    throw FormatError(std::string("key file: ") + e.what());
  }
}

inline json bias_to_json(const BiasVector& bias) {
  return json{{"version", kFormatVersion},
              {"n", bias.size()},
              {"label", to_string(bias.label)},
              {"delta", encode_f64(bias.values)}};
}

inline BiasLabel parse_label(std::string_view s) {
  if (s == "original") return BiasLabel::original;
  if (s == "watermarked") return BiasLabel::watermarked;
  if (s == "adversarial") return BiasLabel::adversarial;
  throw FormatError("unknown bias label '" + std::string(s) + "'");
}

inline BiasVector bias_from_json(const json& j) {
  constexpr std::string_view what = "bias file";
  detail::check_version(j, what);
  const auto n = detail::field<std::size_t>(j, "n", what);
  BiasVector out;
  out.values = decode_f64(detail::field<std::string>(j, "delta", what));
  if (out.values.size() != n) throw FormatError("bias file: values length does not match n");
  if (!all_finite(out.values)) throw FormatError("bias file: non-finite component");
  if (j.contains("label")) out.label = parse_label(detail::field<std::string>(j, "label", what));
  return out;
}

inline WatermarkKey load_key(const std::string& path) { return key_from_json(parse_json(read_file(path), path)); }
inline BiasVector load_bias(const std::string& path) { return bias_from_json(parse_json(read_file(path), path)); }

// ---------------------------------------------------------------------------
// token text

enum class TextFormat { whitespace, json };

inline TokenSequence parse_text(std::string_view content, std::size_t n, TextFormat format) {
  TokenSequence out;
  out.n = n;
  if (format == TextFormat::json) {
    const auto j = parse_json(content, "text");
    if (!j.is_array()) throw FormatError("text: expected a JSON array of token ids");
    for (const auto& v : j) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw FormatError("text: token ids must be non-negative integers");
      }
      const auto id = v.get<std::uint64_t>();
      if (id > UINT32_MAX) throw FormatError("text: token id too large");
      out.tokens.push_back(static_cast<Token>(id));
    }
  } else {
    std::istringstream in{std::string(content)};
    std::string word;
    while (in >> word) {
      std::uint64_t id = 0;
      if (word.empty() || word.size() > 10) throw FormatError("text: bad token '" + word + "'");
      for (char c : word) {
        if (c < '0' || c > '9') throw FormatError("text: bad token '" + word + "'");
        id = id * 10 + static_cast<std::uint64_t>(c - '0');
      }
      if (id > UINT32_MAX) throw FormatError("text: token id too large");
      out.tokens.push_back(static_cast<Token>(id));
    }
  }
  return out;
}

inline std::string format_text(const TokenSequence& text, TextFormat format) {
  if (format == TextFormat::json) return json(text.tokens).dump() + "\n";
  std::string out;
  for (std::size_t i = 0; i < text.tokens.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(text.tokens[i]);
  }
  out += '\n';
  return out;
}

// ---------------------------------------------------------------------------
// reports and specs

inline json report_to_json(const DetectionReport& r) {
  json j{{"decision", r.decision}, {"score", r.score}, {"threshold", r.threshold}};
  if (r.norm) j["norm"] = *r.norm;
  if (r.norm_bound) j["norm_bound"] = *r.norm_bound;
  if (r.distinct_tokens) j["distinct_tokens"] = *r.distinct_tokens;
  if (r.trigger_index) j["trigger_index"] = *r.trigger_index;
  if (r.trigger_score) j["trigger_score"] = *r.trigger_score;
  if (r.trigger_threshold) j["trigger_threshold"] = *r.trigger_threshold;
  j["diagnostics"] = r.diagnostics;
  return j;
}

inline json spec_to_json(const ToyModelSpec& s) {
  return json{{"version", kFormatVersion},
              {"n", s.n},
              {"context_order", s.context_order},
              {"logit_scale", s.logit_scale},
              {"base_seed", s.base_seed},
              {"significance_floor", s.significance_floor},
              {"support_size", s.support_size},
              {"off_support_logit", s.off_support_logit}};
}

inline ToyModelSpec spec_from_json(const json& j) {
  constexpr std::string_view what = "model spec";
  if (!j.is_object()) throw FormatError("model spec: expected an object");
  if (j.contains("version")) detail::check_version(j, what);
  ToyModelSpec s;
  detail::maybe(j, "n", s.n, what);
  detail::maybe(j, "context_order", s.context_order, what);
  detail::maybe(j, "logit_scale", s.logit_scale, what);
  detail::maybe(j, "base_seed", s.base_seed, what);
  detail::maybe(j, "significance_floor", s.significance_floor, what);
  detail::maybe(j, "support_size", s.support_size, what);
  detail::maybe(j, "off_support_logit", s.off_support_logit, what);
  return s;
}

inline AttackKind parse_attack_kind(std::string_view s) {
  if (s == "gaussian_perturb") return AttackKind::gaussian_perturb;
  if (s == "token_substitute") return AttackKind::token_substitute;
  if (s == "custom_bias_edit") return AttackKind::custom_bias_edit;
  throw FormatError("unknown attack kind '" + std::string(s) + "'");
}

inline json attack_to_json(const AttackSpec& a) {
  return json{{"kind", to_string(a.kind)}, {"magnitude", a.magnitude}, {"seed", a.seed}};
}

inline AttackSpec attack_from_json(const json& j) {
  constexpr std::string_view what = "attack spec";
  AttackSpec a;
  a.kind = parse_attack_kind(detail::field<std::string>(j, "kind", what));
  detail::maybe(j, "magnitude", a.magnitude, what);
  detail::maybe(j, "seed", a.seed, what);
  return a;
}

inline json bound_to_json(const BoundCheckResult& r) {
  json params = json::object();
  for (const auto& [k, v] : r.params) params[k] = v;
  return json{{"name", r.name},
              {"kind", to_string(r.kind)},
              {"params", params},
              {"empirical", r.empirical},
              {"analytic_bound", r.analytic_bound},
              {"standard_error", r.standard_error},
              {"trials", r.trials},
              {"satisfied", r.satisfied}};
}

inline std::string bounds_to_jsonl(const std::vector<BoundCheckResult>& results) {
  std::string out;
  for (const auto& r : results) out += bound_to_json(r).dump() + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// CSV

/// Shortest round-trip-safe decimal rendering, identical on every run.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[40];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : columns_(header.size()) { row(header); }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw InvariantError("CsvWriter: row width differs from header");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ += ',';
      out_ += csv_field(cells[i]);
    }
    out_ += "\r\n";
  }

  const std::string& str() const noexcept { return out_; }

 private:
  std::size_t columns_;
  std::string out_;
};

/// Minimal RFC-4180 reader (quoted fields, doubled quotes, CRLF or LF).
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(cell));
      cell.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !cell.empty()) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
      }
      row.clear();
      cell.clear();
      any = false;
    } else {
      cell += c;
      any = true;
    }
  }
  if (quoted) throw FormatError("csv: unterminated quoted field");
  if (any || !cell.empty()) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace biaswm::io
