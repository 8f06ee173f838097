#pragma once

#include <stdexcept>
#include <string>

namespace demoval {

// Process exit codes used by the CLI. Library code throws typed errors;
// the CLI maps them onto these.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfigError = 2,
  kExitBackendError = 3,
  kExitPartialResults = 4,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual int exit_code() const { return kExitFailure; }
};

// Invalid configuration, arguments, templates, or input files.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return kExitConfigError; }
};

// A prompt template is missing a required placeholder.
class TemplateError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Evaluation backend failed (network, exhausted retries, model refusal
// rate above the configured ceiling, ...).
class BackendError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return kExitBackendError; }
};

// The backend answered but the payload does not parse as expected.
class ProtocolError : public BackendError {
 public:
  using BackendError::BackendError;
};

// Filesystem problem: unreadable input, unwritable output, held lock.
class IoError : public Error {
 public:
  using Error::Error;
};

// Two value tables with different demo id universes cannot be merged.
class MergeError : public Error {
 public:
  using Error::Error;
};

// A fairness metric is undefined because a required group/cell is empty.
class MetricError : public Error {
 public:
  using Error::Error;
};

// exact_values refused: the enumeration would exceed the configured budget.
class BudgetError : public Error {
 public:
  using Error::Error;
};

// A run finished but produced incomplete results (per-example failures,
// truncated curve).
class PartialResultError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return kExitPartialResults; }
};

}  // namespace demoval
