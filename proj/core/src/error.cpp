#include "prinstrat/error.hpp"

namespace prinstrat {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateMargin: return "DegenerateMargin";
    case ErrorCode::ThetaOne: return "ThetaOne";
    case ErrorCode::InvalidTheta: return "InvalidTheta";
    case ErrorCode::DeltaUnderflow: return "DeltaUnderflow";
    case ErrorCode::SeparationDetected: return "SeparationDetected";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::SparseCell: return "SparseCell";
    case ErrorCode::EmptyCell: return "EmptyCell";
    case ErrorCode::NearZeroDenominator: return "NearZeroDenominator";
    case ErrorCode::StackedFitFailed: return "StackedFitFailed";
    case ErrorCode::UndefinedOutcome: return "UndefinedOutcome";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace prinstrat
