#include "vmdnet/error.hpp"

namespace vmdnet {

ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::KTooSmall:
      return ErrorCategory::Config;
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::NonFiniteValue:
      return ErrorCategory::Numerical;
    default:
      return ErrorCategory::Data;
  }
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::KTooSmall: return "KTooSmall";
    case ErrorCode::SignalTooShort: return "SignalTooShort";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::DegenerateSplit: return "DegenerateSplit";
    case ErrorCode::NonFiniteNormalization: return "NonFiniteNormalization";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::Io: return "Io";
    case ErrorCode::CacheCorrupt: return "CacheCorrupt";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyCandidateSet: return "EmptyCandidateSet";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace vmdnet
