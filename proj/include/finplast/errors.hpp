#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace finplast {

enum class ErrorKind {
  LogUndefined,
  NotInSL3,
  SingularMatrix,
  SingularP,
  StaleCache,
  InvalidExponents,
  NonStationaryIdentity,
  IndefiniteHessian,
  GrowthFailure,
  InvalidFlowConstants,
  InvalidParams,
  DegenerateGradient,
  GridMismatch,
  SizeMismatch,
  WindowOutOfRange,
  HistoryTooShort,
  TimeOutOfRange,
  InvalidKernel,
  InvalidGrid,
  InvalidArgument,
  NonConvergence,
  ConfigError,
};

constexpr std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::LogUndefined: return "LogUndefined";
    case ErrorKind::NotInSL3: return "NotInSL3";
    case ErrorKind::SingularMatrix: return "SingularMatrix";
    case ErrorKind::SingularP: return "SingularP";
    case ErrorKind::StaleCache: return "StaleCache";
    case ErrorKind::InvalidExponents: return "InvalidExponents";
    case ErrorKind::NonStationaryIdentity: return "NonStationaryIdentity";
    case ErrorKind::IndefiniteHessian: return "IndefiniteHessian";
    case ErrorKind::GrowthFailure: return "GrowthFailure";
    case ErrorKind::InvalidFlowConstants: return "InvalidFlowConstants";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::DegenerateGradient: return "DegenerateGradient";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::WindowOutOfRange: return "WindowOutOfRange";
    case ErrorKind::HistoryTooShort: return "HistoryTooShort";
    case ErrorKind::TimeOutOfRange: return "TimeOutOfRange";
    case ErrorKind::InvalidKernel: return "InvalidKernel";
    case ErrorKind::InvalidGrid: return "InvalidGrid";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace finplast
