#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drdid {

enum class ErrorKind {
  NotPositiveDefinite,
  MaxIterationsExceeded,
  HessianSingular,
  Separation,
  AllTreatedOrAllControl,
  ObjectiveUnbounded,
  InsufficientSubsample,
  ExtremePropensity,
  MissingLinearization,
  NonFiniteDraw,
  DegenerateTreatment,
  EmptyCell,
  ParseError,
  DuplicateId,
  MissingColumn,
  InvalidArgument,
  FailureRateExceeded,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::MaxIterationsExceeded: return "MaxIterationsExceeded";
    case ErrorKind::HessianSingular: return "HessianSingular";
    case ErrorKind::Separation: return "Separation";
    case ErrorKind::AllTreatedOrAllControl: return "AllTreatedOrAllControl";
    case ErrorKind::ObjectiveUnbounded: return "ObjectiveUnbounded";
    case ErrorKind::InsufficientSubsample: return "InsufficientSubsample";
    case ErrorKind::ExtremePropensity: return "ExtremePropensity";
    case ErrorKind::MissingLinearization: return "MissingLinearization";
    case ErrorKind::NonFiniteDraw: return "NonFiniteDraw";
    case ErrorKind::DegenerateTreatment: return "DegenerateTreatment";
    case ErrorKind::EmptyCell: return "EmptyCell";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::FailureRateExceeded: return "FailureRateExceeded";
  }
  return "Unknown";
}

/// Data errors come from malformed input; everything else is numerical.
constexpr bool is_data_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ParseError:
    case ErrorKind::DuplicateId:
    case ErrorKind::MissingColumn:
    case ErrorKind::EmptyCell:
    case ErrorKind::AllTreatedOrAllControl:
    case ErrorKind::DegenerateTreatment:
    case ErrorKind::InvalidArgument:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace drdid
