#pragma once

#include <stdexcept>
#include <string>

namespace kgrec {

/// Base class for all library errors. `exit_code()` is what the CLI returns.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, int code = 1)
      : std::runtime_error(what), code_(code) {}
  int exit_code() const noexcept { return code_; }

 private:
  int code_;
};

/// Malformed input data (bad lines, conflicting POI metadata, ...).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what, 1) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, 2) {}
};

/// A stage was run before the stage that produces its inputs.
class MissingArtifact : public Error {
 public:
  MissingArtifact(const std::string& stage, const std::string& what)
      : Error(what, 3), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

class NumericalFailure : public Error {
 public:
  explicit NumericalFailure(const std::string& what) : Error(what, 4) {}
};

/// Programming-contract violations: shape mismatches, bad arguments.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace kgrec
