#include "iidshell/error.hpp"

namespace iidshell {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidScale: return "InvalidScale";
    case ErrorCode::InvalidMixture: return "InvalidMixture";
    case ErrorCode::DimensionError: return "DimensionError";
    case ErrorCode::InvalidData: return "InvalidData";
    case ErrorCode::Unsupported: return "Unsupported";
    case ErrorCode::InvalidSchedule: return "InvalidSchedule";
    case ErrorCode::NonSPDScale: return "NonSPDScale";
    case ErrorCode::ShellTooThin: return "ShellTooThin";
    case ErrorCode::InvalidSampleSize: return "InvalidSampleSize";
    case ErrorCode::EmptyTable: return "EmptyTable";
    case ErrorCode::InvalidUniform: return "InvalidUniform";
    case ErrorCode::TailNotCovered: return "TailNotCovered";
    case ErrorCode::MinorizationTooSmall: return "MinorizationTooSmall";
    case ErrorCode::PreconditionViolated: return "PreconditionViolated";
    case ErrorCode::ResidualStuck: return "ResidualStuck";
    case ErrorCode::BadInit: return "BadInit";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::DegenerateTarget: return "DegenerateTarget";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::DegenerateCoordinate: return "DegenerateCoordinate";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
    case ErrorCode::DataError: return "DataError";
    case ErrorCode::Internal: return "Internal";
  }
  return "Internal";
}

int exit_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::MissingArtifact:
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidScale:
    case ErrorCode::InvalidMixture:
    case ErrorCode::InvalidSchedule:
    case ErrorCode::InvalidSampleSize:
    case ErrorCode::DimensionError:
    case ErrorCode::Unsupported:
      return 2;
    case ErrorCode::DataError:
    case ErrorCode::InvalidData:
      return 3;
    case ErrorCode::NonSPDScale:
    case ErrorCode::ShellTooThin:
    case ErrorCode::EmptyTable:
    case ErrorCode::InvalidUniform:
    case ErrorCode::TailNotCovered:
    case ErrorCode::MinorizationTooSmall:
    case ErrorCode::PreconditionViolated:
    case ErrorCode::ResidualStuck:
    case ErrorCode::BadInit:
    case ErrorCode::InsufficientSamples:
    case ErrorCode::DegenerateTarget:
    case ErrorCode::TooFewSamples:
    case ErrorCode::DegenerateCoordinate:
      return 4;
    case ErrorCode::Internal:
      return 5;
  }
  return 5;
}

}  // namespace iidshell
