#pragma once

#include <stdexcept>
#include <string>

namespace corenet {

// Invalid argument values: out-of-range frequencies, bad weights, malformed
// configs. CLI maps this to exit code 2.
class ParameterError : public std::invalid_argument {
 public:
  explicit ParameterError(const std::string& what) : std::invalid_argument(what) {}
};

// Shape or length mismatches between tensors/signals.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Unreadable, truncated or inconsistent data files. CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values detected mid-computation. CLI exit code 4.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace corenet
