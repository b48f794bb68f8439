#pragma once

#include <stdexcept>
#include <string>

namespace prinstrat {

enum class ErrorCode {
  DegenerateMargin,
  ThetaOne,
  InvalidTheta,
  DeltaUnderflow,
  SeparationDetected,
  RankDeficient,
  SparseCell,
  EmptyCell,
  NearZeroDenominator,
  StackedFitFailed,
  UndefinedOutcome,
  ParseError,
  SchemaError,
  DomainError,
  ConfigError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace prinstrat
