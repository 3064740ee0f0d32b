#pragma once

#include <stdexcept>
#include <string>

namespace fusenet {

/// Broad failure class; the CLI maps each category onto an exit code.
enum class ErrorCategory {
  config,     // malformed or inconsistent configuration
  data,       // missing / malformed dataset files
  dimension,  // tensor shape mismatch
  contract,   // violated precondition of an API
  training,   // training aborted (single-class labels, non-finite grads)
  transport,  // remote embedding provider failure
  io,         // filesystem write failures
};

inline const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::data: return "data";
    case ErrorCategory::dimension: return "dimension";
    case ErrorCategory::contract: return "contract";
    case ErrorCategory::training: return "training";
    case ErrorCategory::transport: return "transport";
    case ErrorCategory::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

/// Raised by file parsers; carries the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : DataError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ErrorCategory::dimension, what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorCategory::contract, what) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error(ErrorCategory::training, what) {}
};

class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status = 0)
      : Error(ErrorCategory::transport, what), status_(status) {}

  /// HTTP status of the last failed attempt, 0 when no response arrived.
  int status() const noexcept { return status_; }

 private:
  int status_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

}  // namespace fusenet
