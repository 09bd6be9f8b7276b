#pragma once

#include <stdexcept>
#include <string>

namespace cwgen {

/// Caller broke a documented precondition (shape mismatch, invalid argument).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced or met a non-finite value, or failed to converge.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inversion of a matrix whose smallest eigenvalue is not bounded away from 0.
class SingularityError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Malformed or unusable input data (CSV problems, degenerate channels, short splits).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid run configuration. The message lists every violation found.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A pipeline stage was started before the artifact it consumes exists.
class PrerequisiteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cwgen
