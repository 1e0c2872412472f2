#pragma once

#include <stdexcept>
#include <string>

namespace biaswm {

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument is outside the operation's domain (n < 1, epsilon < 0, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Vector lengths or token alphabets disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A file or serialized payload could not be parsed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// An internal invariant did not hold.
class InvariantError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ParameterError(what);
}

inline void require_dims(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": length " + std::to_string(a) +
                         " != " + std::to_string(b));
  }
}

}  // namespace detail
}  // namespace biaswm
