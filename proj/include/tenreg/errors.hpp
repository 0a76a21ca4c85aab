#pragma once

#include <stdexcept>

namespace tenreg {

/// Malformed or unreadable data file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data violates a precondition (degenerate responses, too few systems, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An estimation routine could not produce a finite, well-defined answer.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tenreg
