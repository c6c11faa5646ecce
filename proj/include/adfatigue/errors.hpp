#pragma once

#include <stdexcept>
#include <string>

namespace adfatigue {

// Exit codes used by the command-line tool. Each error class maps to one.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kConfig = 2,
  kIo = 3,
  kData = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::kData; }
};

// Invalid or inconsistent configuration. `field` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error("config error: " + field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }
  ExitCode exit_code() const noexcept override { return ExitCode::kConfig; }

 private:
  std::string field_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io error: " + what) {}
  ExitCode exit_code() const noexcept override { return ExitCode::kIo; }
};

// Malformed or inconsistent input data (catalog, logs, posterior files).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what) {}
};

class CatalogIntegrityError : public DataError {
 public:
  explicit CatalogIntegrityError(const std::string& what)
      : DataError("catalog integrity: " + what) {}
};

class DecisionError : public DataError {
 public:
  explicit DecisionError(const std::string& what) : DataError("decision: " + what) {}
};

class UndefinedEstimateError : public DataError {
 public:
  explicit UndefinedEstimateError(const std::string& what)
      : DataError("undefined estimate: " + what) {}
};

}  // namespace adfatigue
