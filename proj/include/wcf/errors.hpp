#pragma once

#include <stdexcept>
#include <string>

namespace wcf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Factorization failure, singular system, divergent integration, degenerate weights.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Grid domain too small: probability mass leaks past the boundary.
class DomainError : public Error {
 public:
  using Error::Error;
};

class UnsupportedKind : public Error {
 public:
  using Error::Error;
};

class SizeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require_dim(long got, long want, const char* what) {
  if (got != want) {
    throw DimensionMismatch(std::string(what) + ": expected dimension " + std::to_string(want) +
                            ", got " + std::to_string(got));
  }
}

}  // namespace detail
}  // namespace wcf
