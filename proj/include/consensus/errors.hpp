#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace consensus {

enum class ErrorKind {
  InvalidArgument,
  NonSymmetric,
  AssumptionViolated,
  DisconnectedGraph,
  NotStabilizable,
  NotControllable,
  NumericalFailure,
  FeasibilityCheckFailed,
  SingularP,
  InfeasibleP,
  PreconditionViolated,
  NonFiniteState,
  SchemaMismatch,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NonSymmetric: return "NonSymmetric";
    case ErrorKind::AssumptionViolated: return "AssumptionViolated";
    case ErrorKind::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorKind::NotStabilizable: return "NotStabilizable";
    case ErrorKind::NotControllable: return "NotControllable";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::FeasibilityCheckFailed: return "FeasibilityCheckFailed";
    case ErrorKind::SingularP: return "SingularP";
    case ErrorKind::InfeasibleP: return "InfeasibleP";
    case ErrorKind::PreconditionViolated: return "PreconditionViolated";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind so
/// callers (the CLI in particular) can map it onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind),
        message_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// The message without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

}  // namespace consensus
