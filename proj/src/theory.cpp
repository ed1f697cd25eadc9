#include "mur/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "mur/error.hpp"
#include "mur/uncertainty.hpp"

namespace mur::theory {

namespace {

// Welford accumulator with Chan's pairwise merge.
struct Moments {
  std::uint64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }

  void merge(const Moments& other) {
    if (other.n == 0) return;
    if (n == 0) {
      *this = other;
      return;
    }
    const double total = static_cast<double>(n + other.n);
    const double delta = other.mean - mean;
    mean += delta * static_cast<double>(other.n) / total;
    m2 += other.m2 + delta * delta * static_cast<double>(n) * static_cast<double>(other.n) / total;
    n += other.n;
  }

  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double mean_se() const { return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
  // Standard error of the sample variance for Gaussian data.
  double variance_se() const {
    return n > 1 ? variance() * std::sqrt(2.0 / static_cast<double>(n - 1)) : 0.0;
  }
};

struct MomentsSeries {
  std::vector<Moments> per_step;

  void merge(const MomentsSeries& other) {
    if (per_step.empty()) per_step.resize(other.per_step.size());
    for (std::size_t i = 0; i < other.per_step.size(); ++i) per_step[i].merge(other.per_step[i]);
  }
};

constexpr std::uint64_t kChunk = 8192;

// Trials are split into fixed-size chunks merged in chunk order, so the result
// does not depend on how many threads ran them. Trial i always draws from an
// engine seeded by derive_seed(seed, i).
template <class Acc, class MakeAcc, class Trial>
Acc run_trials(std::uint64_t trials, std::uint64_t seed, MakeAcc make_acc, Trial trial) {
  const std::uint64_t chunks = (trials + kChunk - 1) / kChunk;
  std::vector<Acc> partial(chunks, make_acc());
  const unsigned workers =
      std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                      static_cast<unsigned>(std::max<std::uint64_t>(chunks, 1))));
  auto work = [&](unsigned worker) {
    Engine engine;
    for (std::uint64_t c = worker; c < chunks; c += workers) {
      const std::uint64_t end = std::min(trials, (c + 1) * kChunk);
      for (std::uint64_t i = c * kChunk; i < end; ++i) {
        engine.seed(derive_seed(seed, i));
        trial(engine, partial[c]);
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  Acc total = make_acc();
  for (const auto& p : partial) total.merge(p);
  return total;
}

void require_t(std::uint32_t t) {
  if (t < 1) throw Error(ErrorCode::InvalidT, "t must be >= 1");
}

void require_trials(std::uint64_t trials, std::uint64_t minimum) {
  if (trials < minimum) {
    throw Error(ErrorCode::InsufficientTrials, "needs at least " + std::to_string(minimum) +
                                                   " trials, got " + std::to_string(trials));
  }
}

}  // namespace

double DriftModel::mu(std::uint32_t i) const {
  return mu_infinity + scale * std::pow(beta, static_cast<double>(i));
}

double BoundReport::parameter(const std::string& name) const {
  for (const auto& [key, value] : parameters) {
    if (key == name) return value;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

void BoundReport::evaluate() {
  switch (criterion) {
    case Criterion::UpperBound:
      satisfied = empirical_value <= analytic_bound + slack * standard_error;
      break;
    case Criterion::RelativeMatch:
      satisfied = std::abs(empirical_value - analytic_bound) <= slack * std::abs(analytic_bound);
      break;
    case Criterion::AbsoluteMatch:
      satisfied = std::abs(empirical_value - analytic_bound) <= slack * standard_error;
      break;
  }
}

std::string to_string(BoundReport::Criterion criterion) {
  switch (criterion) {
    case BoundReport::Criterion::UpperBound: return "upper_bound";
    case BoundReport::Criterion::RelativeMatch: return "relative_match";
    case BoundReport::Criterion::AbsoluteMatch: return "absolute_match";
  }
  return "unknown";
}

double variance_coefficient(double alpha, std::uint32_t t) {
  validate_alpha(alpha);
  require_t(t);
  return (1.0 - alpha) * (1.0 - std::pow(alpha, 2.0 * t)) / (1.0 + alpha);
}

double simple_average_variance(std::uint32_t t) {
  require_t(t);
  return 1.0 / static_cast<double>(t);
}

MomentumVsAverage compare_momentum_vs_average(double alpha, std::uint32_t t) {
  if (t > 100) throw Error(ErrorCode::InvalidT, "comparison is defined for t <= 100");
  MomentumVsAverage out;
  out.alpha = alpha;
  out.t = t;
  out.momentum_coeff = variance_coefficient(alpha, t);
  out.average_coeff = simple_average_variance(t);
  out.momentum_lower = out.momentum_coeff < out.average_coeff;
  return out;
}

std::vector<MomentumVsAverage> momentum_vs_average_region(std::span<const double> alphas,
                                                         std::uint32_t t_max) {
  std::vector<MomentumVsAverage> out;
  for (double a : alphas) {
    for (std::uint32_t t = 1; t <= t_max; ++t) out.push_back(compare_momentum_vs_average(a, t));
  }
  return out;
}

double bias_constant(double alpha, double beta, double scale) {
  validate_alpha(alpha);
  if (std::abs(alpha - beta) < 1e-6) {
    throw Error(ErrorCode::DegenerateRates, "|alpha - beta| must be >= 1e-6");
  }
  return scale * ((1.0 - alpha) * beta / std::abs(alpha - beta) + 1.0);
}

double misfire_exponent_coefficient(double alpha) {
  validate_alpha(alpha);
  return 2.0 * (1.0 + alpha) / (1.0 - alpha);
}

double misfire_bound(double alpha, double tau, double nu) {
  const double gap = tau - nu;
  return std::exp(-misfire_exponent_coefficient(alpha) * gap * gap);
}

double gradient_form_identity(std::span<const double> ms, double alpha) {
  validate_alpha(alpha);
  if (ms.size() < 2) throw Error(ErrorCode::TooShort, "identity needs at least two steps");
  double worst = 0.0;
  for (std::size_t t = 1; t <= ms.size(); ++t) {
    const double closed = momentum_closed_form(ms.first(t), alpha, MomentumConvention::SeedFirst);
    double expansion = ms[0];
    for (std::size_t i = 1; i < t; ++i) {
      const double g = ms[i - 1] - ms[i];
      expansion -= (1.0 - std::pow(alpha, static_cast<double>(t - i))) * g;
    }
    worst = std::max(worst, std::abs(closed - expansion));
  }
  return worst;
}

EquivalenceResult closed_form_equivalence(std::uint32_t sequences, std::uint64_t seed,
                                          std::uint32_t max_length, double max_value) {
  EquivalenceResult result;
  result.sequences = sequences;
  std::vector<double> ms;
  for (std::uint32_t s = 0; s < sequences; ++s) {
    Engine engine(derive_seed(seed, s));
    const double alpha = 0.01 + 0.98 * uniform01(engine);
    const auto length = 1 + static_cast<std::uint32_t>(engine() % max_length);
    ms.resize(length);
    for (auto& m : ms) m = max_value * uniform01(engine);

    MomentumState state(alpha);
    for (double m : ms) state = momentum_update(state, StepUncertainty(m));
    const double closed = momentum_closed_form(ms, alpha);
    const double scale = std::max(std::abs(closed), std::abs(state.value()));
    const double err = scale > 0.0 ? std::abs(closed - state.value()) / scale : 0.0;
    result.max_relative_error = std::max(result.max_relative_error, err);
  }
  return result;
}

std::vector<VarianceGridPoint> variance_grid(std::span<const double> alphas,
                                             std::uint32_t t_max, double sigma,
                                             std::uint64_t trials, std::uint64_t seed) {
  require_t(t_max);
  require_trials(trials, kMinVarianceTrials);
  if (!(sigma > 0.0)) throw Error(ErrorCode::Precondition, "sigma must be > 0");
  constexpr double kMu = 1.0;  // constant pure uncertainty; drops out of the variance

  std::vector<VarianceGridPoint> out;
  for (std::size_t a = 0; a < alphas.size(); ++a) {
    const double alpha = alphas[a];
    validate_alpha(alpha);
    struct Acc {
      MomentsSeries momentum, step;
      void merge(const Acc& o) {
        momentum.merge(o.momentum);
        step.merge(o.step);
      }
    };
    auto make = [&] {
      Acc acc;
      acc.momentum.per_step.resize(t_max);
      acc.step.per_step.resize(t_max);
      return acc;
    };
    const Acc acc = run_trials<Acc>(trials, derive_seed(seed, a), make, [&](Engine& e, Acc& acc) {
      GaussianSampler normal;
      double momentum = 0.0;
      for (std::uint32_t t = 0; t < t_max; ++t) {
        const double m = kMu + sigma * normal(e);
        momentum = alpha * momentum + (1.0 - alpha) * m;
        acc.momentum.per_step[t].add(momentum);
        acc.step.per_step[t].add(m);
      }
    });
    for (std::uint32_t t = 1; t <= t_max; ++t) {
      const auto& mm = acc.momentum.per_step[t - 1];
      const auto& ms = acc.step.per_step[t - 1];
      out.push_back(VarianceGridPoint{alpha, t, variance_coefficient(alpha, t) * sigma * sigma,
                                      mm.variance(), mm.variance_se(), ms.variance(),
                                      ms.variance_se(), trials});
    }
  }
  return out;
}

bool VarianceGridPoint::matches_analytic(double k) const {
  return std::abs(momentum_variance - analytic) <= k * momentum_se;
}

bool VarianceGridPoint::below_step_variance(double k) const {
  return momentum_variance + k * momentum_se < step_variance - k * step_se;
}

BoundReport empirical_variance_experiment(double alpha, std::uint32_t t, double sigma,
                                          std::uint64_t trials, std::uint64_t seed,
                                          double relative_slack) {
  const double alphas[] = {alpha};
  const auto point = variance_grid(alphas, t, sigma, trials, seed).back();
  const double s2 = sigma * sigma;
  BoundReport report;
  report.experiment = "variance_coefficient";
  report.parameters = {{"alpha", alpha},
                       {"t", static_cast<double>(t)},
                       {"sigma", sigma},
                       {"seed", static_cast<double>(seed)},
                       {"step_variance_ratio", point.step_variance / s2},
                       {"relative_slack", relative_slack}};
  report.analytic_bound = variance_coefficient(alpha, t);
  report.empirical_value = point.momentum_variance / s2;
  report.standard_error = point.momentum_se / s2;
  report.trials = trials;
  report.criterion = BoundReport::Criterion::RelativeMatch;
  report.slack = relative_slack;
  report.evaluate();
  return report;
}

std::vector<BoundReport> bias_bound_experiment(const DriftModel& drift, double alpha,
                                               double sigma, std::uint64_t trials,
                                               std::uint64_t seed, BiasBound bound) {
  validate_alpha(alpha);
  if (!(drift.beta > 0.0 && drift.beta < 1.0) || !(drift.scale > 0.0) || drift.mu_infinity < 0.0) {
    throw Error(ErrorCode::Precondition, "drift model needs D > 0, beta in (0,1), mu_inf >= 0");
  }
  if (sigma < 0.0) throw Error(ErrorCode::Precondition, "sigma must be >= 0");
  require_t(drift.t_max);
  require_trials(trials, sigma == 0.0 ? 1 : kMinBiasTrials);
  const double k = bias_constant(alpha, drift.beta, drift.scale);
  const double rho = std::max(alpha, drift.beta);
  const std::uint32_t t_max = drift.t_max;

  std::vector<double> mu(t_max);
  for (std::uint32_t i = 0; i < t_max; ++i) mu[i] = drift.mu(i + 1);

  auto make = [&] {
    MomentsSeries acc;
    acc.per_step.resize(t_max);
    return acc;
  };
  const MomentsSeries acc =
      run_trials<MomentsSeries>(trials, seed, make, [&](Engine& e, MomentsSeries& acc) {
        GaussianSampler normal;
        double momentum = 0.0;
        for (std::uint32_t t = 0; t < t_max; ++t) {
          const double m = mu[t] + (sigma > 0.0 ? sigma * normal(e) : 0.0);
          momentum = alpha * momentum + (1.0 - alpha) * m;
          acc.per_step[t].add(momentum - mu[t]);
        }
      });

  std::vector<BoundReport> out;
  for (std::uint32_t t = 1; t <= t_max; ++t) {
    const auto& bias = acc.per_step[t - 1];
    const double published = k * std::pow(rho, static_cast<double>(t));
    const double start_term = std::pow(alpha, static_cast<double>(t)) * std::abs(mu[t - 1]);
    BoundReport report;
    report.experiment = bound == BiasBound::Published ? "bias_bound" : "bias_bound_with_start_term";
    report.parameters = {{"alpha", alpha},
                         {"beta", drift.beta},
                         {"D", drift.scale},
                         {"mu_inf", drift.mu_infinity},
                         {"sigma", sigma},
                         {"t", static_cast<double>(t)},
                         {"K", k},
                         {"rho", rho},
                         {"start_term", start_term},
                         {"signed_bias", bias.mean},
                         {"seed", static_cast<double>(seed)}};
    report.analytic_bound = bound == BiasBound::Published ? published : published + start_term;
    report.empirical_value = std::abs(bias.mean);
    report.standard_error = bias.mean_se();
    report.trials = trials;
    report.criterion = BoundReport::Criterion::UpperBound;
    report.slack = 3.0;
    report.evaluate();
    out.push_back(std::move(report));
  }
  return out;
}

BoundedSampler BoundedSampler::uniform() {
  return BoundedSampler{"uniform[0,1]", 0.5, [](Engine& e) { return uniform01(e); }};
}

BoundedSampler BoundedSampler::constant(double value) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw Error(ErrorCode::Precondition, "constant sampler must lie in [0,1]");
  }
  return BoundedSampler{"constant", value, [value](Engine&) { return value; }};
}

BoundReport misfire_bound_experiment(const MisfireConfig& config, const BoundedSampler& sampler) {
  validate_alpha(config.alpha);
  if (!(config.gamma > 0.0 && config.gamma < 1.0)) {
    throw Error(ErrorCode::InvalidGamma, "gamma must lie in (0,1)");
  }
  if (config.t < 2) throw Error(ErrorCode::InvalidT, "misfire needs t >= 2 (a history step)");
  require_trials(config.trials, kMinMisfireTrials);

  const double alpha = config.alpha;
  const std::uint32_t history = config.t - 1;
  const double nu = sampler.mean * (1.0 - std::pow(alpha, static_cast<double>(history)));
  const double tau = config.m_current + std::log(config.gamma);
  if (tau < nu) {
    throw Error(ErrorCode::RegimeViolation, "threshold " + std::to_string(tau) +
                                                " lies below E[M_{t-1}] = " + std::to_string(nu));
  }

  struct Count {
    std::uint64_t hits = 0;
    std::uint64_t n = 0;
    void merge(const Count& o) {
      hits += o.hits;
      n += o.n;
    }
  };
  const Count count = run_trials<Count>(config.trials, config.seed, [] { return Count{}; },
                                        [&](Engine& e, Count& c) {
                                          double momentum = 0.0;
                                          for (std::uint32_t i = 0; i < history; ++i) {
                                            momentum = alpha * momentum + (1.0 - alpha) * sampler.draw(e);
                                          }
                                          ++c.n;
                                          if (momentum >= tau) ++c.hits;
                                        });

  const double n = static_cast<double>(count.n);
  const double p = static_cast<double>(count.hits) / n;
  // sum of squared weights for the finite-history Hoeffding form
  const double weight_sq = (1.0 - alpha) * (1.0 - std::pow(alpha, 2.0 * history)) / (1.0 + alpha);

  BoundReport report;
  report.experiment = "misfire_bound";
  report.parameters = {{"alpha", alpha},
                       {"gamma", config.gamma},
                       {"t", static_cast<double>(config.t)},
                       {"m_t", config.m_current},
                       {"tau", tau},
                       {"nu_hat", nu},
                       {"exponent_coeff", misfire_exponent_coefficient(alpha)},
                       {"finite_t_bound", std::exp(-2.0 * (tau - nu) * (tau - nu) / weight_sq)},
                       {"seed", static_cast<double>(config.seed)}};
  report.analytic_bound = misfire_bound(alpha, tau, nu);
  report.empirical_value = p;
  report.standard_error = std::sqrt(p * (1.0 - p) / n);
  report.trials = config.trials;
  report.criterion = BoundReport::Criterion::UpperBound;
  report.slack = 3.0;
  report.evaluate();
  return report;
}

}  // namespace mur::theory
