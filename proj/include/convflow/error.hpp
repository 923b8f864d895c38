#pragma once

#include <stdexcept>
#include <string>

namespace convflow {

/// Failure categories; the CLI maps each onto its process exit code.
enum class ErrorKind {
  input,            // malformed or missing input data
  config,           // invalid configuration
  missing_upstream, // a pipeline stage ran before its dependencies
  numerical,        // non-finite values, rank deficiency, non-convergence
  io,               // filesystem failure
  remote            // embedding service failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct InputError : Error {
  explicit InputError(const std::string& what) : Error(ErrorKind::input, what) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};
struct MissingUpstreamError : Error {
  MissingUpstreamError(const std::string& what, std::string stage)
      : Error(ErrorKind::missing_upstream, what), stage(std::move(stage)) {}
  std::string stage;
};
struct NumericalError : Error {
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};
struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};
struct RemoteError : Error {
  explicit RemoteError(const std::string& what) : Error(ErrorKind::remote, what) {}
};

/// A non-fatal problem found while processing; the offending item is skipped.
struct Diagnostic {
  std::string where;
  std::string message;
};

}  // namespace convflow
