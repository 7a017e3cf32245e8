#pragma once

#include <stdexcept>
#include <string>

namespace harmnet {

// Base for all library errors. Messages are module-qualified
// ("autodiff: ...", "data: ...") so CLI output names the failing layer.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/operand shapes disagree.
struct DimensionError : Error {
  using Error::Error;
};

// A numeric argument is outside its legal range.
struct ParameterError : Error {
  using Error::Error;
};

// Malformed or inconsistent input data (files, ids, labels).
struct DataError : Error {
  using Error::Error;
};

// Invalid configuration (unknown variant, bad ratios, empty sets).
struct ConfigError : Error {
  using Error::Error;
};

// An API precondition was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

// Operation used before required fitting/initialization.
struct StateError : Error {
  using Error::Error;
};

// A sequence-level input is unusable (empty, fully masked, too short).
struct InputError : Error {
  using Error::Error;
};

// Metric is mathematically undefined for the given inputs.
struct MetricError : Error {
  using Error::Error;
};

}  // namespace harmnet
