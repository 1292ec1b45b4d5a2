#pragma once

#include <stdexcept>
#include <string>

namespace uncplab {

/// Precondition or contract violation on an input (bad grid size, mismatched
/// grids, parameters out of range).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical check failed (eigensolver residual, quadrature disagreement,
/// multiplier overflow).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace detail
}  // namespace uncplab
