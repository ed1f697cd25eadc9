#include "mur/error.hpp"

namespace mur {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyStep: return "EmptyStep";
    case ErrorCode::InvalidLogProb: return "InvalidLogProb";
    case ErrorCode::InvalidAlpha: return "InvalidAlpha";
    case ErrorCode::InvalidGamma: return "InvalidGamma";
    case ErrorCode::StateMismatch: return "StateMismatch";
    case ErrorCode::InvalidT: return "InvalidT";
    case ErrorCode::InsufficientTrials: return "InsufficientTrials";
    case ErrorCode::DegenerateRates: return "DegenerateRates";
    case ErrorCode::RegimeViolation: return "RegimeViolation";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::BackendUnreachable: return "BackendUnreachable";
    case ErrorCode::BackendRejected: return "BackendRejected";
    case ErrorCode::MissingLogProbs: return "MissingLogProbs";
    case ErrorCode::ContextOverflow: return "ContextOverflow";
    case ErrorCode::ScriptExhausted: return "ScriptExhausted";
    case ErrorCode::ThinkingUnsupported: return "ThinkingUnsupported";
    case ErrorCode::ScorerFailure: return "ScorerFailure";
    case ErrorCode::CriticFailure: return "CriticFailure";
    case ErrorCode::Precondition: return "Precondition";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::SchemaError: return "SchemaError";
  }
  return "Unknown";
}

}  // namespace mur
