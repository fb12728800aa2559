#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vmdnet {

enum class ErrorCode {
  // configuration
  InvalidConfig,
  KTooSmall,
  // data
  SignalTooShort,
  NonFiniteInput,
  SeriesTooShort,
  DegenerateSplit,
  NonFiniteNormalization,
  TooShort,
  MissingColumn,
  NonMonotonicTimestamps,
  EmptyFile,
  ParseError,
  Io,
  CacheCorrupt,
  ShapeMismatch,
  EmptyCandidateSet,
  // numerical
  NonFiniteLoss,
  NonFiniteValue,
};

enum class ErrorCategory { Config = 2, Data = 3, Numerical = 4 };

ErrorCategory category_of(ErrorCode code);
std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace vmdnet
