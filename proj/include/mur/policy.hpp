#pragma once

// Scaling detectors: decide, per generated step, whether the expensive
// test-time scaling strategy should replace it.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mur/uncertainty.hpp"

namespace mur {

/// Momentum gate: scale iff m_t > M_{t-1} - ln(gamma).
struct MurPolicy {
  double gamma = 0.9;
};

/// Scale iff m_t exceeds the mean of steps 1..t-1.
struct AvgUncertaintyPolicy {};

/// Scale iff the step's token-level confidence falls below tau.
struct TlcThresholdPolicy {
  double tau = 0.8;
};

struct PerStepPolicy {};
struct NeverPolicy {};

/// Random scaling baseline. In Count mode exactly `count` distinct step
/// indices are drawn from 1..horizon; in Rate mode each step is flagged
/// independently with probability `rate`. Both are pure functions of
/// (seed, step index).
struct RandomPolicy {
  enum class Mode { Count, Rate };
  Mode mode = Mode::Count;
  std::uint32_t count = 1;
  double rate = 0.0;
  std::uint32_t horizon = 30;
  std::uint64_t seed = 0;
};

using ScalePolicy = std::variant<MurPolicy, AvgUncertaintyPolicy, TlcThresholdPolicy,
                                 PerStepPolicy, NeverPolicy, RandomPolicy>;

struct GateDecision {
  bool scale = false;
  double m_current = 0.0;
  /// Absent for detectors that have no threshold (per-step, never, random).
  std::optional<double> threshold;
  std::string policy_tag;
  std::uint32_t step_index = 0;
};

/// Short stable name: mur, avg, tlc, per-step, never, random.
std::string policy_tag(const ScalePolicy& policy);

/// Throws InvalidGamma / Precondition when the policy parameters are out of
/// range. gamma = 1 is accepted here for boundary analysis.
void validate_policy(const ScalePolicy& policy);

/// Returns a copy with the random seed replaced; no-op for other variants.
ScalePolicy reseed(ScalePolicy policy, std::uint64_t seed);

/// Evaluates the detector for step `step_index` (1-based). Both trackers must
/// reflect exactly the steps before this one.
GateDecision gate(const ScalePolicy& policy, const MomentumState& momentum,
                  const RunningMeanState& running_mean, StepUncertainty m, double tlc,
                  std::uint32_t step_index);

/// Step indices picked by a Count-mode random policy, ascending.
std::vector<std::uint32_t> random_schedule(const RandomPolicy& policy);

bool random_selects(const RandomPolicy& policy, std::uint32_t step_index);

}  // namespace mur
