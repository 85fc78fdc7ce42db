#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fdivlab {

enum class ErrorCode {
  NegativeRate,
  DimensionMismatch,
  FamilyMismatch,
  Reducible,
  NotNormalizable,
  InvalidArgument,
  AbsoluteContinuityViolated,
  StepTooLarge,
  NonPositiveSeries,
  ZeroDensityCell,
  UnsupportedFamily,
  DegenerateFilter,
  CovarianceBlowup,
  DegenerateMeasure,
  ZeroEssInf,
  IllConditionedRegression,
  ConfigInvalid,
  IoFailure,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NegativeRate: return "NegativeRate";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::FamilyMismatch: return "FamilyMismatch";
    case ErrorCode::Reducible: return "Reducible";
    case ErrorCode::NotNormalizable: return "NotNormalizable";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::AbsoluteContinuityViolated: return "AbsoluteContinuityViolated";
    case ErrorCode::StepTooLarge: return "StepTooLarge";
    case ErrorCode::NonPositiveSeries: return "NonPositiveSeries";
    case ErrorCode::ZeroDensityCell: return "ZeroDensityCell";
    case ErrorCode::UnsupportedFamily: return "UnsupportedFamily";
    case ErrorCode::DegenerateFilter: return "DegenerateFilter";
    case ErrorCode::CovarianceBlowup: return "CovarianceBlowup";
    case ErrorCode::DegenerateMeasure: return "DegenerateMeasure";
    case ErrorCode::ZeroEssInf: return "ZeroEssInf";
    case ErrorCode::IllConditionedRegression: return "IllConditionedRegression";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

}  // namespace fdivlab
