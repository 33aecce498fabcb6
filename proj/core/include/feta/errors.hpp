#pragma once

#include <stdexcept>
#include <string>

namespace feta {

// Error categories map one-to-one onto the CLI exit codes (see tools/).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Calibration cannot reach the target epsilon (feature queries too expensive
// or sigma_d outside the search range).
struct CalibrationError : std::runtime_error {
  explicit CalibrationError(const std::string& what) : std::runtime_error(what) {}
};

struct PrerequisiteError : std::runtime_error {
  explicit PrerequisiteError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite loss or update during a training stage.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

// Accountant arithmetic left the representable range despite log-space
// evaluation.
struct AccountingRangeError : std::runtime_error {
  explicit AccountingRangeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace feta
