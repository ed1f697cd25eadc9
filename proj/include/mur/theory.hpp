#pragma once

// Closed-form evaluators and seeded Monte Carlo experiments for the
// statistical properties of the momentum tracker: closed-form equivalence,
// variance reduction, drift bias, comparison with the plain average, and
// the concentration bound on gate misfires.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mur/rng.hpp"

namespace mur::theory {

/// Noise model m_i = mu_i + eps_i with eps_i ~ N(0, sigma^2).
struct NoiseModel {
  std::vector<double> mu;
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

/// Drifting pure uncertainty mu_i = mu_inf + D * beta^i.
struct DriftModel {
  double mu_infinity = 1.0;
  double scale = 1.0;  // D
  double beta = 0.5;
  std::uint32_t t_max = 30;

  double mu(std::uint32_t i) const;
};

struct BoundReport {
  /// How `satisfied` was decided.
  enum class Criterion {
    UpperBound,     // empirical <= analytic + slack * standard_error
    RelativeMatch,  // |empirical - analytic| <= slack * analytic
    AbsoluteMatch,  // |empirical - analytic| <= slack * standard_error
  };

  std::string experiment;
  std::vector<std::pair<std::string, double>> parameters;
  double analytic_bound = 0.0;
  double empirical_value = 0.0;
  double standard_error = 0.0;
  std::uint64_t trials = 0;
  Criterion criterion = Criterion::UpperBound;
  double slack = 3.0;
  bool satisfied = false;
  std::string prng{kEngineName};

  double parameter(const std::string& name) const;
  /// Recomputes `satisfied` from the numeric fields.
  void evaluate();
};

std::string to_string(BoundReport::Criterion criterion);

// ---- closed-form evaluators ------------------------------------------------

/// f(a,t) = (1-a)(1-a^{2t})/(1+a): Var(M_t) / sigma^2 under i.i.d. noise.
double variance_coefficient(double alpha, std::uint32_t t);

/// Var of the plain running average over t steps, as a multiple of sigma^2.
double simple_average_variance(std::uint32_t t);

struct MomentumVsAverage {
  double alpha = 0.0;
  std::uint32_t t = 0;
  double momentum_coeff = 0.0;
  double average_coeff = 0.0;
  bool momentum_lower = false;
};

MomentumVsAverage compare_momentum_vs_average(double alpha, std::uint32_t t);

/// Every (alpha, t) combination, alpha-major.
std::vector<MomentumVsAverage> momentum_vs_average_region(std::span<const double> alphas,
                                                         std::uint32_t t_max);

/// K = D((1-a)b/|a-b| + 1).
double bias_constant(double alpha, double beta, double scale);

/// Exponent multiplier 2(1+a)/(1-a) of the asymptotic misfire bound.
double misfire_exponent_coefficient(double alpha);

/// exp(-2 (tau - nu)^2 (1+a)/(1-a)), the t-free form of the misfire bound.
double misfire_bound(double alpha, double tau, double nu);

/// Max over t of |SeedFirst M_t - (m_1 - sum_{i<t} (1 - a^{t-i}) g_i)| with
/// g_i = m_i - m_{i+1}.
double gradient_form_identity(std::span<const double> ms, double alpha);

// ---- Monte Carlo experiments -----------------------------------------------

inline constexpr std::uint64_t kMinVarianceTrials = 10'000;
inline constexpr std::uint64_t kMinBiasTrials = 10'000;
inline constexpr std::uint64_t kMinMisfireTrials = 100'000;

struct EquivalenceResult {
  std::uint32_t sequences = 0;
  double max_relative_error = 0.0;
};

/// Random m-sequences (length 1..max_length, values in [0, max_value], alpha
/// in (0.01, 0.99)); compares the recursion against the closed form.
EquivalenceResult closed_form_equivalence(std::uint32_t sequences, std::uint64_t seed,
                                          std::uint32_t max_length = 100,
                                          double max_value = 20.0);

/// Var(M_t)/sigma^2 from simulation against f(a,t), relative slack.
BoundReport empirical_variance_experiment(double alpha, std::uint32_t t, double sigma,
                                          std::uint64_t trials, std::uint64_t seed,
                                          double relative_slack = 0.05);

struct VarianceGridPoint {
  double alpha = 0.0;
  std::uint32_t t = 0;
  double analytic = 0.0;          // f(a,t) * sigma^2
  double momentum_variance = 0.0; // empirical Var(M_t)
  double momentum_se = 0.0;
  double step_variance = 0.0;     // empirical Var(m_t)
  double step_se = 0.0;
  std::uint64_t trials = 0;

  /// |Var(M_t) - f sigma^2| within `k` standard errors.
  bool matches_analytic(double k = 3.0) const;
  /// Var(M_t) below Var(m_t) with both estimates padded by `k` SEs.
  bool below_step_variance(double k = 3.0) const;
};

std::vector<VarianceGridPoint> variance_grid(std::span<const double> alphas,
                                             std::uint32_t t_max, double sigma,
                                             std::uint64_t trials, std::uint64_t seed);

/// Which analytic bound the bias experiment checks against.
enum class BiasBound {
  Published,      // K rho^t
  WithStartTerm,  // K rho^t + a^t |mu_t|, accounting for M_0 = 0
};

/// One report per t in 1..t_max. sigma = 0 makes the run deterministic and
/// then any trials >= 1 is accepted.
std::vector<BoundReport> bias_bound_experiment(const DriftModel& drift, double alpha,
                                               double sigma, std::uint64_t trials,
                                               std::uint64_t seed,
                                               BiasBound bound = BiasBound::Published);

/// Bounded sampler on [0, 1] with a known mean.
struct BoundedSampler {
  std::string name;
  double mean = 0.5;
  std::function<double(Engine&)> draw;

  static BoundedSampler uniform();
  static BoundedSampler constant(double value);
};

struct MisfireConfig {
  double alpha = 0.9;
  double gamma = 0.9;
  std::uint32_t t = 10;
  double m_current = 0.9;  // fixed m_t
  std::uint64_t trials = kMinMisfireTrials;
  std::uint64_t seed = 0;
};

/// Frequency of M_{t-1} >= m_t + ln(gamma) over i.i.d. history draws against
/// the concentration bound. Only valid while tau >= E[M_{t-1}].
BoundReport misfire_bound_experiment(const MisfireConfig& config, const BoundedSampler& sampler);

}  // namespace mur::theory
