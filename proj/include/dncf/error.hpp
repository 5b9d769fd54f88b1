#pragma once

#include <stdexcept>
#include <string>

namespace dncf {

// Every error thrown by the library derives from Error. The CLI maps the
// subclasses onto process exit codes (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input files.
class DataError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

class FusionError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

enum class ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

inline ExitCode exit_code(const Error& e) {
  if (dynamic_cast<const NumericError*>(&e) != nullptr) return ExitCode::kNumeric;
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return ExitCode::kUsage;
  return ExitCode::kData;
}

}  // namespace dncf
