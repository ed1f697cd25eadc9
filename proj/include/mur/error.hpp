#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mur {

enum class ErrorCode {
  // uncertainty math
  EmptyStep,
  InvalidLogProb,
  InvalidAlpha,
  InvalidGamma,
  StateMismatch,
  // theory experiments
  InvalidT,
  InsufficientTrials,
  DegenerateRates,
  RegimeViolation,
  TooShort,
  // backends
  BackendUnreachable,
  BackendRejected,
  MissingLogProbs,
  ContextOverflow,
  ScriptExhausted,
  ThinkingUnsupported,
  // strategies
  ScorerFailure,
  CriticFailure,
  // plumbing
  Precondition,
  ConfigError,
  IoError,
  SchemaError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// All failures raised by the library carry a stable code so callers can map
/// them onto exit statuses or retry decisions without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Only transport-level backend failures are worth retrying.
  bool retryable() const noexcept { return code_ == ErrorCode::BackendUnreachable; }

 private:
  ErrorCode code_;
};

}  // namespace mur
