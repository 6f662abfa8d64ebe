#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace twinbeam {

// Precondition or argument contract violated by the caller.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical integration produced non-finite values.
class NumericAbort : public std::runtime_error {
 public:
  NumericAbort(const std::string& what, double z, double max_magnitude)
      : std::runtime_error(what), z_(z), max_magnitude_(max_magnitude) {}

  double z() const noexcept { return z_; }
  double max_magnitude() const noexcept { return max_magnitude_; }

 private:
  double z_;
  double max_magnitude_;
};

// Malformed or truncated binary/JSON input.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Estimator could not produce a value (no lobe, no crossing, ...).
class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace twinbeam
