#pragma once

// Versioned JSONL traces. Line 1 is a header:
//
//   {"type":"header","schema":"mur-trace","version":1,"config":{...}}
//
// followed, per trajectory in run order, by one {"type":"step",...} line per
// step and a {"type":"trajectory",...} summary, and finally one
// {"type":"metrics",...} line. Keys are emitted sorted and doubles in
// shortest round-trip form, so equal runs give byte-identical files.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "mur/harness.hpp"

namespace mur {

inline constexpr const char* kTraceSchema = "mur-trace";
inline constexpr int kTraceVersion = 1;

nlohmann::json config_to_json(const RunConfig& config);
nlohmann::json metrics_to_json(const RunMetrics& metrics);
nlohmann::json step_to_json(const Trajectory& trajectory, const StepRecord& step);
nlohmann::json trajectory_to_json(const Trajectory& trajectory);

void write_trace(std::ostream& out, const RunConfig& config, const RunResult& result);
void write_trace_file(const std::string& path, const RunConfig& config, const RunResult& result);

struct TracedStep {
  std::uint32_t step_index = 0;
  double m = 0.0;
  double m_kept = 0.0;
  double M_before = 0.0;
  double M_after = 0.0;
  bool scaled = false;
  std::uint64_t backbone_tokens = 0;
  std::uint64_t external_tokens = 0;
};

struct TracedTrajectory {
  std::string item_id;
  std::uint32_t sample = 0;
  std::string status;
  bool correct = false;
  std::uint64_t backbone_tokens = 0;
  std::uint64_t external_tokens = 0;
  std::vector<TracedStep> steps;
};

struct TraceData {
  nlohmann::json header;
  std::vector<TracedTrajectory> trajectories;
  nlohmann::json metrics;  // null when the run was cut short

  double alpha() const;
};

/// Throws SchemaError on a wrong schema/version, malformed lines, or step
/// records that do not belong to the following trajectory summary.
TraceData read_trace(std::istream& in);
TraceData read_trace_file(const std::string& path);

/// Human-readable metrics table.
std::string format_metrics(const RunMetrics& metrics, const std::string& label);

}  // namespace mur
