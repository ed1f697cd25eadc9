#pragma once

// Trajectory loop: generate a step, gate it, optionally replace it through a
// scaling strategy, advance the momentum with the kept step. Dataset runs,
// answer checking and metrics sit on top.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mur/backend.hpp"
#include "mur/error.hpp"
#include "mur/policy.hpp"
#include "mur/strategies.hpp"

namespace mur {

struct DatasetItem {
  std::string id;
  std::string question;
  std::string gold_answer;
};

/// Reads {"id","question","answer"} JSONL. Ids must be unique; a numeric
/// answer is taken in its JSON spelling.
std::vector<DatasetItem> load_dataset(const std::string& path);

struct RunConfig {
  double alpha = 0.9;
  ScalePolicy policy = MurPolicy{0.9};
  StrategyConfig strategy;
  BackendDescriptor backend;
  double temperature = kDefaultTemperature;
  std::uint32_t max_steps = 30;
  std::uint32_t max_step_tokens = 512;
  std::uint32_t samples_per_query = 1;
  std::uint64_t master_seed = 0;
  std::uint32_t concurrency = 1;
  std::string instruction_suffix{kDefaultInstruction};

  void validate() const;
};

enum class TerminatedBy { Answer, MaxSteps };
enum class TrajectoryStatus { Completed, Failed };

std::string_view to_string(TerminatedBy reason);
std::string_view to_string(TrajectoryStatus status);

struct StepRecord {
  std::uint32_t step_index = 0;
  /// The step kept in the chain (the replacement when scaled).
  StepGeneration step;
  /// The first-pass step when it was replaced.
  std::optional<StepGeneration> original;
  double m = 0.0;       // uncertainty of the first-pass step, the gate input
  double m_kept = 0.0;  // uncertainty of the kept step, the momentum input
  double tlc = 0.0;     // token-level confidence of the first-pass step
  double M_before = 0.0;
  double M_after = 0.0;
  GateDecision decision;
  std::optional<StrategyOutcome> outcome;
  std::uint64_t backbone_tokens = 0;  // first pass plus everything the strategy generated
  std::uint64_t external_tokens = 0;
};

struct Trajectory {
  std::string item_id;
  std::uint32_t sample = 0;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::optional<std::string> final_answer;
  bool correct = false;
  TerminatedBy terminated_by = TerminatedBy::MaxSteps;
  TrajectoryStatus status = TrajectoryStatus::Completed;
  std::optional<ErrorCode> error_code;
  std::string error_message;
  std::uint64_t backbone_tokens = 0;
  std::uint64_t external_tokens = 0;
  /// What the backend session reports as billed; equals backbone_tokens.
  std::uint64_t billed_tokens = 0;

  std::uint32_t scaled_steps() const;
};

struct RunMetrics {
  double accuracy = 0.0;  // pass@1 over completed samples
  double avg_backbone_tokens = 0.0;
  double avg_external_tokens = 0.0;
  double avg_steps = 0.0;
  double avg_scaled_steps = 0.0;
  std::uint32_t completed = 0;
  std::uint32_t failures = 0;
  std::uint32_t total = 0;
  std::uint64_t total_steps = 0;
  std::uint64_t total_scaled_steps = 0;
  std::uint64_t total_backbone_tokens = 0;
  std::uint64_t total_external_tokens = 0;
};

struct RunResult {
  RunMetrics metrics;
  /// Ordered by item, then sample, regardless of concurrency.
  std::vector<Trajectory> trajectories;
};

/// Runs one sample of one item. Backend and strategy errors are caught and
/// recorded on the trajectory.
Trajectory run_trajectory(const DatasetItem& item, std::uint32_t sample, const RunConfig& config,
                          const Backend& backend, const StrategyClients& clients);

RunResult run_dataset(const std::vector<DatasetItem>& items, const RunConfig& config,
                      const Backend& backend, const StrategyClients& clients);

RunMetrics compute_metrics(const std::vector<Trajectory>& trajectories);

/// Text after the last case-insensitive "the answer is", trimmed, first line
/// only, trailing punctuation removed.
std::optional<std::string> extract_answer(const std::string& text);

/// Normalised string equality, numeric comparison at relative 1e-6 when both
/// sides parse as numbers (fractions included), single-letter choices.
bool check_answer(const std::string& predicted, const std::string& gold);

std::string normalize_answer(const std::string& answer);
std::optional<double> parse_numeric_answer(const std::string& normalized);

/// Re-gates a recorded m sequence. The momentum runs over the recorded values
/// themselves; decisions do not feed back. Token-level confidence is exp(-m).
std::vector<GateDecision> replay_gating(std::span<const double> ms, const ScalePolicy& policy,
                                        double alpha);

}  // namespace mur
