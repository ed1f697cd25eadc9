#include "mur/verify_suite.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "mur/error.hpp"

namespace mur {

using theory::BoundReport;

namespace {

constexpr double kGridAlphas[] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
constexpr std::uint32_t kGridTMax = 20;
constexpr double kMisfireOffsets[] = {0.0, 0.01, 0.02, 0.05, 0.1, 0.2};
constexpr std::uint32_t kMisfireTs[] = {5, 10, 20};

bool selected(const VerifyOptions& o, const std::string& group) {
  return o.only.empty() || std::find(o.only.begin(), o.only.end(), group) != o.only.end();
}

BoundReport closed_form_report(const VerifyOptions& o) {
  const auto r = theory::closed_form_equivalence(o.sequences, o.seed);
  BoundReport report;
  report.experiment = "closed_form_equivalence";
  report.parameters = {{"sequences", static_cast<double>(r.sequences)}, {"seed", static_cast<double>(o.seed)}};
  report.analytic_bound = 1e-12;
  report.empirical_value = r.max_relative_error;
  report.trials = r.sequences;
  report.criterion = BoundReport::Criterion::UpperBound;
  report.slack = 0.0;
  report.evaluate();
  return report;
}

BoundReport grid_report(const VerifyOptions& o) {
  const auto grid = theory::variance_grid(kGridAlphas, kGridTMax, 1.0, o.grid_trials, o.seed);
  std::size_t not_below = 0;
  for (const auto& p : grid) not_below += p.below_step_variance(3.0) ? 0 : 1;
  BoundReport report;
  report.experiment = "variance_below_step_variance";
  report.parameters = {{"points", static_cast<double>(grid.size())},
                       {"t_max", kGridTMax},
                       {"sigma", 1.0},
                       {"k_se", 3.0},
                       {"seed", static_cast<double>(o.seed)}};
  // count of grid points where Var(M_t) is not below Var(m_t) at 3 SE
  report.analytic_bound = 0.0;
  report.empirical_value = static_cast<double>(not_below);
  report.trials = o.grid_trials;
  report.criterion = BoundReport::Criterion::UpperBound;
  report.slack = 0.0;
  report.evaluate();
  return report;
}

BoundReport region_report() {
  const auto high = theory::compare_momentum_vs_average(0.99, 20);
  const auto low = theory::compare_momentum_vs_average(0.9, 20);
  BoundReport report;
  report.experiment = "momentum_vs_average_region";
  report.parameters = {{"f(0.99,20)", high.momentum_coeff},
                       {"f(0.9,20)", low.momentum_coeff},
                       {"1/t", high.average_coeff},
                       {"lower_at_0.99", high.momentum_lower ? 1.0 : 0.0},
                       {"lower_at_0.9", low.momentum_lower ? 1.0 : 0.0}};
  // 1 when the map shows momentum lower at 0.99 and not at 0.9
  report.analytic_bound = 1.0;
  report.empirical_value = (high.momentum_lower && !low.momentum_lower) ? 1.0 : 0.0;
  report.criterion = BoundReport::Criterion::AbsoluteMatch;
  report.slack = 0.0;
  report.satisfied = report.empirical_value == report.analytic_bound;
  return report;
}

BoundReport coefficient_report() {
  BoundReport report;
  report.experiment = "misfire_exponent_coefficient";
  report.parameters = {{"alpha", 0.9}};
  report.analytic_bound = 38.0;
  report.empirical_value = theory::misfire_exponent_coefficient(0.9);
  report.criterion = BoundReport::Criterion::RelativeMatch;
  report.slack = 1e-12;
  report.evaluate();
  return report;
}

}  // namespace

const std::vector<std::string>& verify_group_names() {
  static const std::vector<std::string> names = {"closed-form", "variance",            "variance-grid", "region",
                                                 "bias",        "misfire-coefficient", "misfire"};
  return names;
}

std::vector<double> misfire_probe_points(double alpha, double gamma, std::uint32_t t, double mean) {
  const double nu = mean * (1.0 - std::pow(alpha, static_cast<double>(t - 1)));
  std::vector<double> out;
  for (double offset : kMisfireOffsets) {
    double m = nu - std::log(gamma) + offset;
    // keep tau = m + ln(gamma) on the valid side of nu despite rounding
    while (m + std::log(gamma) < nu) m = std::nextafter(m, 2.0);
    out.push_back(m);
  }
  out.push_back(0.9);
  return out;
}

std::vector<BoundReport> run_verify_suite(const VerifyOptions& o,
                                          const std::function<void(const BoundReport&)>& sink) {
  for (const auto& name : o.only) {
    const auto& all = verify_group_names();
    if (std::find(all.begin(), all.end(), name) == all.end()) {
      throw Error(ErrorCode::ConfigError, "unknown verify group '" + name + "'");
    }
  }
  std::vector<BoundReport> reports;
  auto emit = [&](BoundReport r) {
    if (sink) sink(r);
    reports.push_back(std::move(r));
  };

  if (selected(o, "closed-form")) emit(closed_form_report(o));
  if (selected(o, "variance")) emit(theory::empirical_variance_experiment(0.9, 20, 1.0, o.variance_trials, o.seed));
  if (selected(o, "variance-grid")) emit(grid_report(o));
  if (selected(o, "region")) emit(region_report());
  if (selected(o, "bias")) {
    theory::DriftModel drift;
    drift.mu_infinity = 1.0;
    drift.scale = 1.0;
    drift.beta = 0.5;
    drift.t_max = 30;
    for (auto& r : theory::bias_bound_experiment(drift, 0.9, o.bias_sigma, o.bias_trials, o.seed)) emit(std::move(r));
  }
  if (selected(o, "misfire-coefficient")) emit(coefficient_report());
  if (selected(o, "misfire")) {
    const auto sampler = theory::BoundedSampler::uniform();
    std::uint64_t stream = 0;
    for (std::uint32_t t : kMisfireTs) {
      for (double m : misfire_probe_points(0.9, 0.9, t, sampler.mean)) {
        theory::MisfireConfig config;
        config.alpha = 0.9;
        config.gamma = 0.9;
        config.t = t;
        config.m_current = m;
        config.trials = o.misfire_trials;
        config.seed = derive_seed(o.seed, ++stream);
        emit(theory::misfire_bound_experiment(config, sampler));
      }
    }
  }
  return reports;
}

std::string format_report(const BoundReport& r) {
  std::string params;
  for (const auto& [k, v] : r.parameters) {
    if (k == "seed") continue;
    if (!params.empty()) params += ' ';
    params += fmt::format("{}={:.6g}", k, v);
  }
  std::string rule;
  switch (r.criterion) {
    case BoundReport::Criterion::UpperBound: rule = fmt::format("<= bound + {}*SE", r.slack); break;
    case BoundReport::Criterion::RelativeMatch: rule = fmt::format("within {:g} relative", r.slack); break;
    case BoundReport::Criterion::AbsoluteMatch: rule = fmt::format("within {}*SE", r.slack); break;
  }
  return fmt::format("[{}] {} {} | empirical={:.6g} analytic={:.6g} se={:.3g} trials={} ({})",
                     r.satisfied ? "PASS" : "FAIL", r.experiment, params, r.empirical_value, r.analytic_bound,
                     r.standard_error, r.trials, rule);
}

nlohmann::json report_to_json(const BoundReport& r) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [k, v] : r.parameters) params[k] = v;
  return {{"experiment", r.experiment},
          {"parameters", params},
          {"analytic_bound", r.analytic_bound},
          {"empirical_value", r.empirical_value},
          {"standard_error", r.standard_error},
          {"trials", r.trials},
          {"criterion", theory::to_string(r.criterion)},
          {"slack", r.slack},
          {"satisfied", r.satisfied},
          {"prng", r.prng}};
}

}  // namespace mur
