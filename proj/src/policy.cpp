#include "mur/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mur/error.hpp"
#include "mur/rng.hpp"

namespace mur {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::string policy_tag(const ScalePolicy& policy) {
  return std::visit(overloaded{
                        [](const MurPolicy&) { return std::string("mur"); },
                        [](const AvgUncertaintyPolicy&) { return std::string("avg"); },
                        [](const TlcThresholdPolicy&) { return std::string("tlc"); },
                        [](const PerStepPolicy&) { return std::string("per-step"); },
                        [](const NeverPolicy&) { return std::string("never"); },
                        [](const RandomPolicy&) { return std::string("random"); },
                    },
                    policy);
}

void validate_policy(const ScalePolicy& policy) {
  if (const auto* mur = std::get_if<MurPolicy>(&policy)) {
    if (!(mur->gamma > 0.0 && mur->gamma <= 1.0)) {
      throw Error(ErrorCode::InvalidGamma,
                  "gamma must lie in (0,1], got " + std::to_string(mur->gamma));
    }
  } else if (const auto* tlc = std::get_if<TlcThresholdPolicy>(&policy)) {
    if (!(tlc->tau > 0.0 && tlc->tau < 1.0)) {
      throw Error(ErrorCode::Precondition, "tau must lie in (0,1)");
    }
  } else if (const auto* random = std::get_if<RandomPolicy>(&policy)) {
    if (random->mode == RandomPolicy::Mode::Rate && !(random->rate >= 0.0 && random->rate <= 1.0)) {
      throw Error(ErrorCode::Precondition, "random rate must lie in [0,1]");
    }
    if (random->mode == RandomPolicy::Mode::Count && random->horizon == 0) {
      throw Error(ErrorCode::Precondition, "random horizon must be >= 1");
    }
  }
}

ScalePolicy reseed(ScalePolicy policy, std::uint64_t seed) {
  if (auto* random = std::get_if<RandomPolicy>(&policy)) {
    random->seed = seed;
  }
  return policy;
}

std::vector<std::uint32_t> random_schedule(const RandomPolicy& policy) {
  std::vector<std::uint32_t> slots(policy.horizon);
  std::iota(slots.begin(), slots.end(), 1u);
  const auto picks = std::min<std::size_t>(policy.count, slots.size());
  Engine engine(derive_seed(policy.seed, 0x72616e64ULL));
  // Partial Fisher-Yates; modulo bias is negligible against 2^64.
  for (std::size_t i = 0; i < picks; ++i) {
    const auto j = i + static_cast<std::size_t>(engine() % (slots.size() - i));
    std::swap(slots[i], slots[j]);
  }
  slots.resize(picks);
  std::sort(slots.begin(), slots.end());
  return slots;
}

bool random_selects(const RandomPolicy& policy, std::uint32_t step_index) {
  if (policy.mode == RandomPolicy::Mode::Rate) {
    Engine engine(derive_seed(policy.seed, step_index));
    return uniform01(engine) < policy.rate;
  }
  const auto schedule = random_schedule(policy);
  return std::binary_search(schedule.begin(), schedule.end(), step_index);
}

GateDecision gate(const ScalePolicy& policy, const MomentumState& momentum,
                  const RunningMeanState& running_mean, StepUncertainty m, double tlc,
                  std::uint32_t step_index) {
  if (step_index < 1) {
    throw Error(ErrorCode::Precondition, "step indices start at 1");
  }
  if (momentum.step_index() + 1 != step_index || running_mean.count + 1 != step_index) {
    throw Error(ErrorCode::StateMismatch,
                "tracker has seen " + std::to_string(momentum.step_index()) +
                    " steps but gating step " + std::to_string(step_index));
  }
  validate_policy(policy);

  GateDecision decision;
  decision.m_current = m.value();
  decision.policy_tag = policy_tag(policy);
  decision.step_index = step_index;
  const bool past_first = step_index >= 2;

  std::visit(overloaded{
                 [&](const MurPolicy& p) {
                   // Log form of exp(m) > exp(M)/gamma; strict, so ties do not scale.
                   const double threshold = momentum.value() - std::log(p.gamma);
                   decision.threshold = threshold;
                   decision.scale = past_first && m.value() > threshold;
                 },
                 [&](const AvgUncertaintyPolicy&) {
                   decision.threshold = running_mean.mean;
                   decision.scale = past_first && m.value() > running_mean.mean;
                 },
                 [&](const TlcThresholdPolicy& p) {
                   decision.threshold = p.tau;
                   decision.scale = past_first && tlc < p.tau;
                 },
                 [&](const PerStepPolicy&) { decision.scale = true; },
                 [&](const NeverPolicy&) { decision.scale = false; },
                 [&](const RandomPolicy& p) { decision.scale = random_selects(p, step_index); },
             },
             policy);
  return decision;
}

}  // namespace mur
