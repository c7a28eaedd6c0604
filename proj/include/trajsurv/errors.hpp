#pragma once

#include <stdexcept>
#include <string>

namespace trajsurv {

// Error categories map onto CLI exit codes: ConfigError -> 2,
// DataError -> 3, NumericError -> 4. Everything else is a programming
// contract violation and surfaces as std::invalid_argument /
// std::out_of_range from the offending call.

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a metric has no defined value on the given cohort
// (e.g. no comparable pairs for the concordance index).
class UndefinedMetricError : public std::runtime_error {
 public:
  explicit UndefinedMetricError(const std::string& msg)
      : std::runtime_error(msg) {}
};

}  // namespace trajsurv
