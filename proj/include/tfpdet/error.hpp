#pragma once

#include <stdexcept>
#include <string>

namespace tfpdet {

// Exit codes used by the command-line front end.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kData = 3,
  kContract = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const { return code_; }

 private:
  ExitCode code_;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

/// Malformed input files: bad magic, truncation, schema violations.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ExitCode::kData, what) {}
};

class SchemaError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Container version or manifest does not match what the reader expects.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class LookupError : public Error {
 public:
  explicit LookupError(const std::string& what) : Error(ExitCode::kData, what) {}
};

/// Violated preconditions at run time (shape mismatches, empty batches, ...).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ExitCode::kContract, what) {}
};

class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

class IndexError : public ContractError {
 public:
  using ContractError::ContractError;
};

}  // namespace tfpdet
