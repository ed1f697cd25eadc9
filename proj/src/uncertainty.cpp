#include "mur/uncertainty.hpp"

#include <cmath>
#include <string>

#include "mur/error.hpp"

namespace mur {

void validate_logprob(double logprob) {
  if (std::isnan(logprob) || std::isinf(logprob) || logprob > 0.0) {
    throw Error(ErrorCode::InvalidLogProb, "logprob must be finite and <= 0, got " +
                                               std::to_string(logprob));
  }
}

TokenLogProb TokenLogProb::make(std::string text, double logprob) {
  validate_logprob(logprob);
  return TokenLogProb{std::move(text), logprob};
}

StepUncertainty::StepUncertainty(double value) : value_(value) {
  if (!(value >= 0.0) || std::isinf(value)) {
    throw Error(ErrorCode::Precondition,
                "step uncertainty must be finite and >= 0, got " + std::to_string(value));
  }
}

void validate_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::InvalidAlpha, "alpha must lie in (0,1), got " + std::to_string(alpha));
  }
}

MomentumState::MomentumState(double alpha) : alpha_(alpha) { validate_alpha(alpha); }

MomentumState::MomentumState(double alpha, double value, std::uint32_t step_index)
    : alpha_(alpha), value_(value), step_index_(step_index) {
  validate_alpha(alpha);
  if (!(value >= 0.0) || std::isinf(value)) {
    throw Error(ErrorCode::Precondition, "momentum value must be finite and >= 0");
  }
  if (step_index == 0 && value != 0.0) {
    throw Error(ErrorCode::Precondition, "momentum starts at M_0 = 0");
  }
}

namespace {

double mean_logprob(std::span<const TokenLogProb> tokens) {
  if (tokens.empty()) {
    throw Error(ErrorCode::EmptyStep, "step carries no tokens");
  }
  double sum = 0.0;
  for (const auto& token : tokens) {
    validate_logprob(token.logprob);
    sum += token.logprob;
  }
  return sum / static_cast<double>(tokens.size());
}

}  // namespace

StepUncertainty step_uncertainty(std::span<const TokenLogProb> tokens) {
  // -0.0 from an all-zero step would still compare >= 0, but keep it clean.
  const double m = -mean_logprob(tokens);
  return StepUncertainty(m == 0.0 ? 0.0 : m);
}

double token_level_confidence(std::span<const TokenLogProb> tokens) {
  return std::exp(mean_logprob(tokens));
}

MomentumState momentum_update(const MomentumState& state, StepUncertainty m) {
  const double a = state.alpha();
  return MomentumState(a, a * state.value() + (1.0 - a) * m.value(), state.step_index() + 1);
}

double momentum_closed_form(std::span<const double> ms, double alpha,
                            MomentumConvention convention) {
  validate_alpha(alpha);
  if (ms.empty()) {
    throw Error(ErrorCode::Precondition, "closed form needs at least one step");
  }
  // Explicit weights rather than Horner, so this stays a separate route from
  // the recursion it is compared against.
  const auto t = ms.size();
  double weighted = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    weighted += std::pow(alpha, static_cast<double>(t - 1 - i)) * ms[i];
  }
  double result = (1.0 - alpha) * weighted;
  if (convention == MomentumConvention::SeedFirst) {
    result += std::pow(alpha, static_cast<double>(t)) * ms.front();
  }
  return result;
}

RunningMeanState running_mean_update(const RunningMeanState& state, StepUncertainty m) {
  const auto count = state.count + 1;
  return RunningMeanState{(state.mean * state.count + m.value()) / count, count};
}

std::vector<double> momentum_trace(std::span<const double> ms, double alpha) {
  MomentumState state(alpha);
  std::vector<double> out;
  out.reserve(ms.size());
  for (double m : ms) {
    state = momentum_update(state, StepUncertainty(m));
    out.push_back(state.value());
  }
  return out;
}

}  // namespace mur
