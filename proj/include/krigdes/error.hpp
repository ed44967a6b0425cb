#pragma once

#include <stdexcept>
#include <string>

namespace krigdes {

// Process exit codes used by the CLI.
enum class ExitCode : int {
  kSuccess = 0,
  kConfigError = 2,
  kNumericalError = 3,
  kValidationFailure = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::kConfigError; }
};

/// Malformed input: bad config keys, bad CSV, invalid indices, contract violations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Requested problem exceeds a configured size cap.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Factorization failed even after the jitter policy was exhausted.
class NumericalError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kNumericalError; }
};

class ValidationError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kValidationFailure; }
};

}  // namespace krigdes
