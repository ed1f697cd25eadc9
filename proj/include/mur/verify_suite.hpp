#pragma once

// The default battery behind `mur verify`: every closed-form check and Monte
// Carlo experiment, each reduced to BoundReports.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mur/theory.hpp"

namespace mur {

struct VerifyOptions {
  std::uint64_t seed = 2024;
  std::uint32_t sequences = 1000;
  std::uint64_t variance_trials = 200'000;
  std::uint64_t grid_trials = 20'000;
  std::uint64_t bias_trials = 50'000;
  double bias_sigma = 0.1;
  std::uint64_t misfire_trials = 200'000;
  /// Experiment groups to run; empty means all. Names: closed-form, variance,
  /// variance-grid, bias, region, misfire-coefficient, misfire.
  std::vector<std::string> only;
};

const std::vector<std::string>& verify_group_names();

/// m_t values probed by the misfire grid at history length t: the regime
/// boundary nu_hat - ln(gamma) plus fixed offsets, and 0.9.
std::vector<double> misfire_probe_points(double alpha, double gamma, std::uint32_t t, double mean);

/// Runs the selected groups in a fixed order and calls `sink` for each report
/// as it is produced.
std::vector<theory::BoundReport> run_verify_suite(
    const VerifyOptions& options,
    const std::function<void(const theory::BoundReport&)>& sink = {});

std::string format_report(const theory::BoundReport& report);
nlohmann::json report_to_json(const theory::BoundReport& report);

}  // namespace mur
