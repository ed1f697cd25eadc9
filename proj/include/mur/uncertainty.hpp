#pragma once

// Step-level uncertainty and the momentum aggregate that tracks it across a
// reasoning trajectory.
//
// Everything here is a value type updated by pure functions, so a trajectory
// can own its own tracker state without any synchronisation.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mur {

/// One emitted token with its natural-log probability.
struct TokenLogProb {
  std::string token_text;
  double logprob = 0.0;

  /// Throws InvalidLogProb for NaN, positive values and -inf.
  static TokenLogProb make(std::string text, double logprob);
};

void validate_logprob(double logprob);

/// Average negative log-likelihood per token of one step, in nats.
class StepUncertainty {
 public:
  StepUncertainty() = default;
  explicit StepUncertainty(double value);

  double value() const noexcept { return value_; }

  friend bool operator==(StepUncertainty, StepUncertainty) = default;

 private:
  double value_ = 0.0;
};

/// Exponential momentum tracker M_t = a*M_{t-1} + (1-a)*m_t with M_0 = 0.
class MomentumState {
 public:
  explicit MomentumState(double alpha);
  MomentumState(double alpha, double value, std::uint32_t step_index);

  double alpha() const noexcept { return alpha_; }
  double value() const noexcept { return value_; }
  std::uint32_t step_index() const noexcept { return step_index_; }

 private:
  double alpha_;
  double value_ = 0.0;
  std::uint32_t step_index_ = 0;
};

/// Running arithmetic mean of the step uncertainties seen so far.
struct RunningMeanState {
  double mean = 0.0;
  std::uint32_t count = 0;
};

/// Where the recursion starts. ZeroStart is the operational tracker
/// (M_0 = 0); SeedFirst seeds the recursion with the first observation, the
/// convention under which the gradient-form expansion is stated.
enum class MomentumConvention { ZeroStart, SeedFirst };

void validate_alpha(double alpha);

StepUncertainty step_uncertainty(std::span<const TokenLogProb> tokens);

/// Geometric-mean token probability exp(mean logprob), in (0, 1].
double token_level_confidence(std::span<const TokenLogProb> tokens);

MomentumState momentum_update(const MomentumState& state, StepUncertainty m);

/// (1-a) * sum_i a^{t-i} m_i, plus a^t m_1 under SeedFirst.
double momentum_closed_form(std::span<const double> ms, double alpha,
                            MomentumConvention convention = MomentumConvention::ZeroStart);

RunningMeanState running_mean_update(const RunningMeanState& state, StepUncertainty m);

/// Every prefix value M_1..M_t of the recursion, from M_0 = 0.
std::vector<double> momentum_trace(std::span<const double> ms, double alpha);

}  // namespace mur
