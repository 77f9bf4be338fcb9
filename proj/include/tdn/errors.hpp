#pragma once

#include <stdexcept>
#include <string>

namespace tdn {

// Malformed or truncated input files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid argument values (negative sigma, k out of range, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionError : public ParameterError {
 public:
  using ParameterError::ParameterError;
};

// Raised by aggregation when some pixel received no estimate.
class CoverageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tdn
