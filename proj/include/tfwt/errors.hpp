#pragma once

#include <stdexcept>
#include <string>

namespace tfwt {

/// Base of every error raised by the library. `exit_code()` is the process
/// exit status the command-line tool reports for this error family.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual int exit_code() const { return 1; }
};

// Configuration and contract violations (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};
class ContractError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};
class ComparisonError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Input data problems (exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};
class ParseError : public DataError {
 public:
  using DataError::DataError;
};
class CategoryError : public DataError {
 public:
  using DataError::DataError;
};
class StratificationError : public DataError {
 public:
  using DataError::DataError;
};
class FitError : public DataError {
 public:
  using DataError::DataError;
};
class EmptySelectionError : public DataError {
 public:
  using DataError::DataError;
};

// Numerical failures (exit code 4).
class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 4; }
};
class TrainingError : public NumericError {
 public:
  TrainingError(const std::string& what, std::size_t epoch)
      : NumericError(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace tfwt
