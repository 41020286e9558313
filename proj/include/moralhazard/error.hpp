#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace moralhazard {

enum class ErrorKind {
  NonFinite,
  NoConvergence,
  NoBracket,
  OutOfSupport,
  OutOfActionDomain,
  ScoreNotInvertible,
  ScoreOutOfRange,
  BelowLimitedLiability,
  Diverged,
  Infeasible,
  GridFallbackFailed,
  NoTransition,
  ParseError,
  ValidationError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::NoBracket: return "NoBracket";
    case ErrorKind::OutOfSupport: return "OutOfSupport";
    case ErrorKind::OutOfActionDomain: return "OutOfActionDomain";
    case ErrorKind::ScoreNotInvertible: return "ScoreNotInvertible";
    case ErrorKind::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorKind::BelowLimitedLiability: return "BelowLimitedLiability";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::GridFallbackFailed: return "GridFallbackFailed";
    case ErrorKind::NoTransition: return "NoTransition";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationError: return "ValidationError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the kinds above so
/// callers (and the CLI's error JSON) can branch on it without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorKind::ValidationError, message);
}

}  // namespace moralhazard
