#pragma once

#include <stdexcept>
#include <string>

namespace imputerank {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (wrong arity, missing header, ...).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Token or column not permitted by an explicit schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Not enough fully observed rows to learn anything.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Optimizer produced a non-finite objective or weights.
class TrainingDivergedError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

class TooFewSamplesError : public Error {
 public:
  using Error::Error;
};

/// Imputer could not be fitted on the supplied rows.
class FitError : public Error {
 public:
  using Error::Error;
};

/// An internal invariant was violated (e.g. EM likelihood decreased).
class InternalError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Failure inside the evaluation pipeline, tagged with the stage it happened in.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace imputerank
