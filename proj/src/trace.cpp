#include "mur/trace.hpp"

#include <fmt/format.h>

#include <fstream>
#include <istream>
#include <ostream>

#include "mur/error.hpp"

namespace mur {

using nlohmann::json;

namespace {

json policy_to_json(const ScalePolicy& policy) {
  json out = {{"tag", policy_tag(policy)}};
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, MurPolicy>) {
          out["gamma"] = p.gamma;
        } else if constexpr (std::is_same_v<P, TlcThresholdPolicy>) {
          out["tau"] = p.tau;
        } else if constexpr (std::is_same_v<P, RandomPolicy>) {
          out["mode"] = p.mode == RandomPolicy::Mode::Count ? "count" : "rate";
          out["count"] = p.count;
          out["rate"] = p.rate;
          out["horizon"] = p.horizon;
        }
      },
      policy);
  return out;
}

json generation_tokens(const StepGeneration& g) {
  json lps = json::array();
  for (const auto& t : g.tokens) lps.push_back(t.logprob);
  return lps;
}

template <typename T>
T required(const json& record, const char* key, std::size_t line_no) {
  if (!record.contains(key)) {
    throw Error(ErrorCode::SchemaError, "trace line " + std::to_string(line_no) + ": missing '" + key + "'");
  }
  try {
    return record[key].get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::SchemaError, "trace line " + std::to_string(line_no) + ": bad '" + key + "'");
  }
}

}  // namespace

json config_to_json(const RunConfig& c) {
  json backend = {{"kind", c.backend.kind == BackendDescriptor::Kind::Http ? "http" : "mock"}};
  if (c.backend.model_name) backend["model"] = *c.backend.model_name;
  return json{{"alpha", c.alpha},
              {"policy", policy_to_json(c.policy)},
              {"strategy", {{"kind", strategy_name(c.strategy.kind)}, {"n", c.strategy.n}, {"rounds", c.strategy.rounds}}},
              {"backend", backend},
              {"temperature", c.temperature},
              {"max_steps", c.max_steps},
              {"max_step_tokens", c.max_step_tokens},
              {"samples", c.samples_per_query},
              {"master_seed", c.master_seed}};
}

json metrics_to_json(const RunMetrics& m) {
  return json{{"accuracy", m.accuracy},
              {"avg_backbone_tokens", m.avg_backbone_tokens},
              {"avg_external_tokens", m.avg_external_tokens},
              {"avg_steps", m.avg_steps},
              {"avg_scaled_steps", m.avg_scaled_steps},
              {"completed", m.completed},
              {"failures", m.failures},
              {"total", m.total},
              {"total_steps", m.total_steps},
              {"total_scaled_steps", m.total_scaled_steps},
              {"total_backbone_tokens", m.total_backbone_tokens},
              {"total_external_tokens", m.total_external_tokens}};
}

json step_to_json(const Trajectory& traj, const StepRecord& s) {
  json decision = {{"scale", s.decision.scale}, {"policy", s.decision.policy_tag}};
  decision["threshold"] = s.decision.threshold ? json(*s.decision.threshold) : json(nullptr);
  json outcome = nullptr;
  if (s.outcome) {
    outcome = {{"strategy", s.outcome->strategy_tag},
               {"chosen_index", s.outcome->chosen_index},
               {"candidates_considered", s.outcome->candidates_considered},
               {"rounds", s.outcome->rounds},
               {"scores", s.outcome->scores},
               {"backbone_tokens", s.outcome->backbone_tokens},
               {"external_tokens", s.outcome->external_tokens}};
  }
  return json{{"type", "step"},
              {"item_id", traj.item_id},
              {"sample", traj.sample},
              {"step_index", s.step_index},
              {"text", s.step.text},
              {"logprobs", generation_tokens(s.step)},
              {"finish_reason", to_string(s.step.finish_reason)},
              {"thinking_tokens", s.step.thinking_tokens},
              {"original_text", s.original ? json(s.original->text) : json(nullptr)},
              {"m", s.m},
              {"m_kept", s.m_kept},
              {"tlc", s.tlc},
              {"M_before", s.M_before},
              {"M_after", s.M_after},
              {"decision", decision},
              {"outcome", outcome},
              {"backbone_tokens", s.backbone_tokens},
              {"external_tokens", s.external_tokens}};
}

json trajectory_to_json(const Trajectory& t) {
  return json{{"type", "trajectory"},
              {"item_id", t.item_id},
              {"sample", t.sample},
              {"seed", t.seed},
              {"status", to_string(t.status)},
              {"error_code", t.error_code ? json(to_string(*t.error_code)) : json(nullptr)},
              {"error", t.error_message},
              {"terminated_by", to_string(t.terminated_by)},
              {"final_answer", t.final_answer ? json(*t.final_answer) : json(nullptr)},
              {"correct", t.correct},
              {"steps", t.steps.size()},
              {"scaled_steps", t.scaled_steps()},
              {"backbone_tokens", t.backbone_tokens},
              {"external_tokens", t.external_tokens},
              {"billed_tokens", t.billed_tokens}};
}

void write_trace(std::ostream& out, const RunConfig& config, const RunResult& result) {
  out << json{{"type", "header"}, {"schema", kTraceSchema}, {"version", kTraceVersion}, {"config", config_to_json(config)}}
             .dump()
      << '\n';
  for (const auto& t : result.trajectories) {
    for (const auto& s : t.steps) out << step_to_json(t, s).dump() << '\n';
    out << trajectory_to_json(t).dump() << '\n';
  }
  out << json{{"type", "metrics"}, {"metrics", metrics_to_json(result.metrics)}}.dump() << '\n';
}

void write_trace_file(const std::string& path, const RunConfig& config, const RunResult& result) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write trace " + path);
  write_trace(out, config, result);
  if (!out) throw Error(ErrorCode::IoError, "failed writing trace " + path);
}

double TraceData::alpha() const { return header.at("config").at("alpha").get<double>(); }

TraceData read_trace(std::istream& in) {
  TraceData data;
  std::string line;
  std::size_t line_no = 0;
  std::vector<TracedStep> pending;
  std::string pending_key;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::SchemaError, "trace line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!record.is_object()) throw Error(ErrorCode::SchemaError, "trace line " + std::to_string(line_no) + ": not an object");
    const auto type = required<std::string>(record, "type", line_no);

    if (data.header.is_null()) {
      if (type != "header" || record.value("schema", "") != kTraceSchema) {
        throw Error(ErrorCode::SchemaError, "not a mur-trace file");
      }
      const auto version = required<int>(record, "version", line_no);
      if (version != kTraceVersion) {
        throw Error(ErrorCode::SchemaError, "trace version " + std::to_string(version) + " is not supported (expected " +
                                                std::to_string(kTraceVersion) + ")");
      }
      if (!record.contains("config") || !record["config"].contains("alpha")) {
        throw Error(ErrorCode::SchemaError, "trace header has no config.alpha");
      }
      data.header = std::move(record);
      continue;
    }

    if (type == "step") {
      const auto key = required<std::string>(record, "item_id", line_no) + "#" +
                       std::to_string(required<std::uint32_t>(record, "sample", line_no));
      if (!pending.empty() && key != pending_key) {
        throw Error(ErrorCode::SchemaError, "trace line " + std::to_string(line_no) + ": steps of two trajectories interleave");
      }
      pending_key = key;
      TracedStep s;
      s.step_index = required<std::uint32_t>(record, "step_index", line_no);
      s.m = required<double>(record, "m", line_no);
      s.m_kept = required<double>(record, "m_kept", line_no);
      s.M_before = required<double>(record, "M_before", line_no);
      s.M_after = required<double>(record, "M_after", line_no);
      s.scaled = required<json>(record, "decision", line_no).value("scale", false);
      s.backbone_tokens = required<std::uint64_t>(record, "backbone_tokens", line_no);
      s.external_tokens = required<std::uint64_t>(record, "external_tokens", line_no);
      if (s.step_index != pending.size() + 1) {
        throw Error(ErrorCode::SchemaError, "trace line " + std::to_string(line_no) + ": step out of order");
      }
      pending.push_back(s);
    } else if (type == "trajectory") {
      TracedTrajectory t;
      t.item_id = required<std::string>(record, "item_id", line_no);
      t.sample = required<std::uint32_t>(record, "sample", line_no);
      t.status = required<std::string>(record, "status", line_no);
      t.correct = required<bool>(record, "correct", line_no);
      t.backbone_tokens = required<std::uint64_t>(record, "backbone_tokens", line_no);
      t.external_tokens = required<std::uint64_t>(record, "external_tokens", line_no);
      if (!pending.empty() && pending_key != t.item_id + "#" + std::to_string(t.sample)) {
        throw Error(ErrorCode::SchemaError, "trace line " + std::to_string(line_no) + ": summary does not match its steps");
      }
      if (required<std::size_t>(record, "steps", line_no) != pending.size()) {
        throw Error(ErrorCode::SchemaError, "trace line " + std::to_string(line_no) + ": step count mismatch");
      }
      t.steps = std::move(pending);
      pending.clear();
      data.trajectories.push_back(std::move(t));
    } else if (type == "metrics") {
      data.metrics = required<json>(record, "metrics", line_no);
    } else {
      throw Error(ErrorCode::SchemaError, "trace line " + std::to_string(line_no) + ": unknown record type " + type);
    }
  }
  if (data.header.is_null()) throw Error(ErrorCode::SchemaError, "empty trace");
  if (!pending.empty()) throw Error(ErrorCode::SchemaError, "trace ends inside a trajectory");
  return data;
}

TraceData read_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open trace " + path);
  return read_trace(in);
}

std::string format_metrics(const RunMetrics& m, const std::string& label) {
  std::string out;
  out += fmt::format("{:<14} {:>8} {:>10} {:>10} {:>8} {:>8} {:>6}/{:<6}\n", "run", "acc", "backbone", "external",
                     "steps", "scaled", "fail", "total");
  out += fmt::format("{:<14} {:>8.4f} {:>10.1f} {:>10.1f} {:>8.2f} {:>8.2f} {:>6}/{:<6}\n", label, m.accuracy,
                     m.avg_backbone_tokens, m.avg_external_tokens, m.avg_steps, m.avg_scaled_steps, m.failures,
                     m.total);
  return out;
}

}  // namespace mur
