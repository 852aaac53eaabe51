#pragma once

#include <stdexcept>
#include <string>

namespace iidshell {

enum class ErrorCode {
  InvalidArgument,
  InvalidScale,
  InvalidMixture,
  DimensionError,
  InvalidData,
  Unsupported,
  InvalidSchedule,
  NonSPDScale,
  ShellTooThin,
  InvalidSampleSize,
  EmptyTable,
  InvalidUniform,
  TailNotCovered,
  MinorizationTooSmall,
  PreconditionViolated,
  ResidualStuck,
  BadInit,
  InsufficientSamples,
  DegenerateTarget,
  TooFewSamples,
  DegenerateCoordinate,
  ConfigError,
  MissingArtifact,
  DataError,
  Internal,
};

const char* to_string(ErrorCode code) noexcept;

/// Process exit status for a failure of the given kind: 2 config, 3 data,
/// 4 numerical, 5 internal.
int exit_status(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace iidshell
