#include "cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "mur/harness.hpp"
#include "mur/trace.hpp"
#include "mur/verify_suite.hpp"

namespace mur::cli {

namespace {

using nlohmann::json;

struct RunFlags {
  std::string dataset;
  std::string backend = "mock";
  std::string endpoint;
  std::string model;
  std::string script;
  std::string policy = "mur";
  double gamma = 0.9;
  double alpha = 0.9;
  double tau = 0.8;
  std::string strategy = "bon";
  std::uint32_t n = 4;
  std::uint32_t rounds = 1;
  double temperature = kDefaultTemperature;
  std::uint32_t max_steps = 30;
  std::uint32_t max_step_tokens = 512;
  std::uint32_t max_thinking_tokens = kMaxThinkingTokens;
  std::uint32_t samples = 1;
  std::uint64_t seed = 0;
  std::string trace_out;
  std::string metrics_out;
  std::uint32_t concurrency = 1;
  std::uint32_t random_count = 0;
  double random_rate = -1.0;
  std::uint32_t random_horizon = 30;
  std::string scorer_endpoint;
  std::string critic_endpoint;
  std::uint32_t timeout_ms = 60'000;
  std::uint32_t retries = 3;
  bool no_n = false;
};

struct VerifyFlags {
  VerifyOptions options;
  std::uint64_t trials = 0;
  std::string json_out;
};

struct ReplayFlags {
  std::string trace;
  std::string gammas = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
  double alpha = 0.0;
};

struct ReportFlags {
  std::vector<std::string> traces;
};

[[noreturn]] void config_error(const std::string& message) { throw Error(ErrorCode::ConfigError, message); }

void require_unit_open(const char* name, double v) {
  if (!(v > 0.0 && v < 1.0)) config_error(fmt::format("--{} must lie in (0,1), got {}", name, v));
}

ScalePolicy policy_from(const RunFlags& f) {
  require_unit_open("gamma", f.gamma);
  if (f.policy == "mur") return MurPolicy{f.gamma};
  if (f.policy == "avg") return AvgUncertaintyPolicy{};
  if (f.policy == "tlc") {
    if (!(f.tau > 0.0 && f.tau <= 1.0)) config_error("--tau must lie in (0,1]");
    return TlcThresholdPolicy{f.tau};
  }
  if (f.policy == "per-step") return PerStepPolicy{};
  if (f.policy == "never") return NeverPolicy{};
  RandomPolicy r;
  r.horizon = f.random_horizon;
  const bool has_count = f.random_count > 0;
  const bool has_rate = f.random_rate >= 0.0;
  if (has_count == has_rate) config_error("--policy random needs exactly one of --random-count, --random-rate");
  if (has_count) {
    r.mode = RandomPolicy::Mode::Count;
    r.count = f.random_count;
  } else {
    r.mode = RandomPolicy::Mode::Rate;
    r.rate = f.random_rate;
  }
  return r;
}

StrategyConfig strategy_from(const RunFlags& f) {
  StrategyConfig s;
  if (f.strategy == "bon") {
    s.kind = StrategyConfig::Kind::GuidedSearch;
  } else if (f.strategy == "critic") {
    s.kind = StrategyConfig::Kind::CriticRefine;
  } else {
    s.kind = StrategyConfig::Kind::ThinkingSwitch;
  }
  s.n = f.n;
  s.rounds = f.rounds;
  return s;
}

BackendDescriptor backend_from(const RunFlags& f) {
  BackendDescriptor d;
  d.kind = f.backend == "http" ? BackendDescriptor::Kind::Http : BackendDescriptor::Kind::Mock;
  if (!f.endpoint.empty()) d.endpoint_url = f.endpoint;
  if (!f.model.empty()) d.model_name = f.model;
  if (!f.script.empty()) d.script_path = f.script;
  if (d.kind == BackendDescriptor::Kind::Http && !d.endpoint_url) config_error("--backend http needs --endpoint");
  if (d.kind == BackendDescriptor::Kind::Mock && !d.script_path) config_error("--backend mock needs --script");
  d.timeout = std::chrono::milliseconds(f.timeout_ms);
  d.retry_limit = f.retries;
  d.supports_n = !f.no_n;
  d.max_thinking_tokens = f.max_thinking_tokens;
  return d;
}

std::unique_ptr<JsonHttpClient> judge_client(const RunFlags& f, const std::string& url, const char* path) {
  return std::make_unique<JsonHttpClient>(url, path, std::chrono::milliseconds(f.timeout_ms), f.retries,
                                          std::chrono::milliseconds(250), bearer_token_from_env("MUR_API_KEY"));
}

int cmd_run(const RunFlags& f, std::ostream& out, std::ostream& err) {
  if (f.dataset.empty()) config_error("--dataset is required");
  RunConfig config;
  require_unit_open("alpha", f.alpha);
  config.alpha = f.alpha;
  config.policy = policy_from(f);
  config.strategy = strategy_from(f);
  config.backend = backend_from(f);
  config.temperature = f.temperature;
  config.max_steps = f.max_steps;
  config.max_step_tokens = f.max_step_tokens;
  config.samples_per_query = f.samples;
  config.master_seed = f.seed;
  config.concurrency = f.concurrency;
  config.validate();

  const auto items = load_dataset(f.dataset);
  if (items.empty()) throw Error(ErrorCode::SchemaError, "dataset " + f.dataset + " has no items");
  const auto backend = make_backend(config.backend);

  std::unique_ptr<ScorerClient> scorer;
  std::unique_ptr<CriticClient> critic;
  const auto* mock = dynamic_cast<const MockBackend*>(backend.get());
  if (!f.scorer_endpoint.empty()) {
    scorer = std::make_unique<HttpScorer>(judge_client(f, f.scorer_endpoint, "/score"));
  } else if (mock) {
    scorer = std::make_unique<ScriptedScorer>(mock->script());
  } else if (config.strategy.kind == StrategyConfig::Kind::GuidedSearch) {
    config_error("--strategy bon with an http backend needs --scorer-endpoint");
  }
  if (!f.critic_endpoint.empty()) {
    critic = std::make_unique<HttpCritic>(judge_client(f, f.critic_endpoint, "/critique"));
  } else if (mock) {
    critic = std::make_unique<ScriptedCritic>(mock->script());
  } else if (config.strategy.kind == StrategyConfig::Kind::CriticRefine) {
    config_error("--strategy critic with an http backend needs --critic-endpoint");
  }

  const auto result = run_dataset(items, config, *backend, StrategyClients{scorer.get(), critic.get()});
  if (!f.trace_out.empty()) write_trace_file(f.trace_out, config, result);

  for (const auto& t : result.trajectories) {
    if (t.status == TrajectoryStatus::Failed) {
      err << fmt::format("{} sample {} failed: [{}] {}\n", t.item_id, t.sample, to_string(*t.error_code),
                         t.error_message);
    }
  }
  out << format_metrics(result.metrics, policy_tag(config.policy));
  json summary = {{"type", "summary"}, {"config", config_to_json(config)}, {"metrics", metrics_to_json(result.metrics)}};
  out << summary.dump() << '\n';
  if (!f.metrics_out.empty()) {
    std::ofstream m(f.metrics_out, std::ios::binary | std::ios::trunc);
    if (!m) throw Error(ErrorCode::IoError, "cannot write " + f.metrics_out);
    m << summary.dump() << '\n';
  }

  if (result.metrics.completed == 0) {
    const auto& first = result.trajectories.front();
    return first.error_code ? exit_code_for(*first.error_code) : kDataError;
  }
  return kSuccess;
}

int cmd_verify(VerifyFlags f, std::ostream& out) {
  if (f.trials > 0) {
    f.options.variance_trials = f.options.grid_trials = f.options.bias_trials = f.options.misfire_trials = f.trials;
  }
  std::ofstream json_out;
  if (!f.json_out.empty()) {
    json_out.open(f.json_out, std::ios::binary | std::ios::trunc);
    if (!json_out) throw Error(ErrorCode::IoError, "cannot write " + f.json_out);
  }
  std::size_t failed = 0;
  const auto reports = run_verify_suite(f.options, [&](const theory::BoundReport& r) {
    out << format_report(r) << '\n';
    if (json_out.is_open()) json_out << report_to_json(r).dump() << '\n';
    failed += r.satisfied ? 0 : 1;
  });
  out << fmt::format("{} of {} reports satisfied (seed {})\n", reports.size() - failed, reports.size(),
                     f.options.seed);
  return failed == 0 ? kSuccess : kCheckFailed;
}

std::vector<double> parse_gammas(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string piece;
  while (std::getline(in, piece, ',')) {
    piece.erase(0, piece.find_first_not_of(" \t"));
    piece.erase(piece.find_last_not_of(" \t") + 1);
    if (piece.empty()) continue;
    std::size_t used = 0;
    double g = 0.0;
    try {
      g = std::stod(piece, &used);
    } catch (const std::exception&) {
      config_error("--gammas: not a number: " + piece);
    }
    if (used != piece.size()) config_error("--gammas: not a number: " + piece);
    require_unit_open("gammas", g);
    out.push_back(g);
  }
  if (out.empty()) config_error("--gammas sweep list is empty");
  std::sort(out.begin(), out.end());
  return out;
}

int cmd_replay(const ReplayFlags& f, std::ostream& out) {
  const auto gammas = parse_gammas(f.gammas);
  const auto trace = read_trace_file(f.trace);
  double alpha = trace.alpha();
  if (f.alpha != 0.0) {
    require_unit_open("alpha", f.alpha);
    alpha = f.alpha;
  }
  std::vector<std::vector<bool>> previous;
  bool monotone = true;
  out << fmt::format("{:>8} {:>10} {:>10} {:>10}\n", "gamma", "flagged", "steps", "subset");
  for (std::size_t g = 0; g < gammas.size(); ++g) {
    std::size_t flagged = 0;
    std::size_t steps = 0;
    bool subset = true;
    std::vector<std::vector<bool>> current;
    for (std::size_t i = 0; i < trace.trajectories.size(); ++i) {
      const auto& traj = trace.trajectories[i];
      std::vector<bool> flags;
      if (!traj.steps.empty()) {
        std::vector<double> ms;
        for (const auto& s : traj.steps) ms.push_back(s.m);
        for (const auto& d : replay_gating(ms, MurPolicy{gammas[g]}, alpha)) flags.push_back(d.scale);
      }
      for (std::size_t k = 0; k < flags.size(); ++k) {
        flagged += flags[k] ? 1 : 0;
        if (g > 0 && previous[i][k] && !flags[k]) subset = false;
      }
      steps += flags.size();
      current.push_back(std::move(flags));
    }
    monotone = monotone && subset;
    out << fmt::format("{:>8.3g} {:>10} {:>10} {:>10}\n", gammas[g], flagged, steps,
                       g == 0 ? "-" : (subset ? "yes" : "NO"));
    previous = std::move(current);
  }
  out << fmt::format("monotone: {}\n", monotone ? "yes" : "no");
  return monotone ? kSuccess : kCheckFailed;
}

int cmd_report(const ReportFlags& f, std::ostream& out) {
  json summaries = json::array();
  bool header = true;
  for (const auto& path : f.traces) {
    const auto trace = read_trace_file(path);
    RunMetrics m;
    std::uint32_t correct = 0;
    for (const auto& t : trace.trajectories) {
      ++m.total;
      std::uint64_t backbone = 0;
      std::uint64_t external = 0;
      for (const auto& s : t.steps) {
        backbone += s.backbone_tokens;
        external += s.external_tokens;
      }
      if (backbone != t.backbone_tokens || external != t.external_tokens) {
        throw Error(ErrorCode::SchemaError, path + ": token totals of " + t.item_id + " do not match its steps");
      }
      if (t.status != "completed") {
        ++m.failures;
        continue;
      }
      ++m.completed;
      correct += t.correct ? 1 : 0;
      m.total_steps += t.steps.size();
      m.total_scaled_steps += std::count_if(t.steps.begin(), t.steps.end(), [](const auto& s) { return s.scaled; });
      m.total_backbone_tokens += t.backbone_tokens;
      m.total_external_tokens += t.external_tokens;
    }
    if (m.completed > 0) {
      const double n = m.completed;
      m.accuracy = correct / n;
      m.avg_backbone_tokens = m.total_backbone_tokens / n;
      m.avg_external_tokens = m.total_external_tokens / n;
      m.avg_steps = m.total_steps / n;
      m.avg_scaled_steps = m.total_scaled_steps / n;
    }
    const auto label = trace.header["config"]["policy"].value("tag", std::string("?"));
    auto table = format_metrics(m, label);
    if (!header) table.erase(0, table.find('\n') + 1);
    header = false;
    out << table;
    auto s = metrics_to_json(m);
    s["trace"] = path;
    s["policy"] = label;
    s["scaled_fraction"] = m.total_steps ? static_cast<double>(m.total_scaled_steps) / m.total_steps : 0.0;
    summaries.push_back(s);
  }
  out << json{{"type", "report"}, {"runs", summaries}}.dump() << '\n';
  return kSuccess;
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidAlpha:
    case ErrorCode::InvalidGamma:
    case ErrorCode::InvalidT:
    case ErrorCode::InsufficientTrials:
    case ErrorCode::DegenerateRates:
    case ErrorCode::RegimeViolation:
    case ErrorCode::TooShort:
    case ErrorCode::Precondition:
      return kConfigError;
    case ErrorCode::IoError:
    case ErrorCode::SchemaError:
    case ErrorCode::EmptyStep:
    case ErrorCode::InvalidLogProb:
    case ErrorCode::StateMismatch:
    case ErrorCode::ScriptExhausted:
      return kDataError;
    case ErrorCode::BackendUnreachable:
    case ErrorCode::BackendRejected:
    case ErrorCode::MissingLogProbs:
    case ErrorCode::ContextOverflow:
    case ErrorCode::ThinkingUnsupported:
    case ErrorCode::ScorerFailure:
    case ErrorCode::CriticFailure:
      return kBackendError;
  }
  return kDataError;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Momentum-gated test-time scaling: runs, theory checks, trace replay and reports", "mur"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  RunFlags rf;
  auto* run = app.add_subcommand("run", "Run a dataset through the gated trajectory loop");
  app.set_config("--config", "", "TOML/INI file; keys under [run] set run flags (command-line flags win)");
  run->fallthrough();
  run->add_option("--dataset", rf.dataset, "JSONL dataset of {id, question, answer}");
  run->add_option("--backend", rf.backend, "Backend kind")->check(CLI::IsMember({"http", "mock"}));
  run->add_option("--endpoint", rf.endpoint, "Completions URL for the http backend");
  run->add_option("--model", rf.model, "Model name sent to the http backend");
  run->add_option("--script", rf.script, "Mock backend script (JSONL)");
  run->add_option("--policy", rf.policy, "Scaling detector")
      ->check(CLI::IsMember({"mur", "avg", "tlc", "per-step", "never", "random"}));
  run->add_option("--gamma", rf.gamma, "Momentum gate scaling rate, in (0,1)");
  run->add_option("--alpha", rf.alpha, "Momentum decay, in (0,1)");
  run->add_option("--tau", rf.tau, "Token-level confidence threshold for --policy tlc");
  run->add_option("--strategy", rf.strategy, "Scaling strategy for flagged steps")
      ->check(CLI::IsMember({"bon", "critic", "think"}));
  run->add_option("--n", rf.n, "Candidates per flagged step for --strategy bon");
  run->add_option("--rounds", rf.rounds, "Critique rounds for --strategy critic");
  run->add_option("--temperature", rf.temperature, "Sampling temperature");
  run->add_option("--max-steps", rf.max_steps, "Step cap per trajectory");
  run->add_option("--max-step-tokens", rf.max_step_tokens, "Token cap per step");
  run->add_option("--max-thinking-tokens", rf.max_thinking_tokens, "Thinking budget for --strategy think");
  run->add_option("--samples", rf.samples, "Samples per query (pass@1 averaged over them)");
  run->add_option("--seed", rf.seed, "Master seed");
  run->add_option("--trace-out", rf.trace_out, "Write the JSONL trace here");
  run->add_option("--metrics-out", rf.metrics_out, "Write the summary record here");
  run->add_option("--concurrency", rf.concurrency, "Trajectories run in parallel");
  run->add_option("--random-count", rf.random_count, "Steps flagged per trajectory by --policy random");
  run->add_option("--random-rate", rf.random_rate, "Per-step flag probability for --policy random");
  run->add_option("--random-horizon", rf.random_horizon, "Step range 1..H for --random-count");
  run->add_option("--scorer-endpoint", rf.scorer_endpoint, "Scoring service URL (default: script scores)");
  run->add_option("--critic-endpoint", rf.critic_endpoint, "Critique service URL (default: script critiques)");
  run->add_option("--timeout-ms", rf.timeout_ms, "Per-request timeout");
  run->add_option("--retries", rf.retries, "Retries on transient http failures");
  run->add_flag("--no-n", rf.no_n, "Server ignores n; sample candidates with separate requests");

  VerifyFlags vf;
  auto* verify = app.add_subcommand("verify", "Check the closed forms and bounds by simulation");
  verify->add_option("--seed", vf.options.seed, "Master seed");
  verify->add_option("--trials", vf.trials, "Override every Monte Carlo trial count");
  verify->add_option("--variance-trials", vf.options.variance_trials, "Trials for the variance coefficient");
  verify->add_option("--grid-trials", vf.options.grid_trials, "Trials per variance grid point");
  verify->add_option("--bias-trials", vf.options.bias_trials, "Trials for the drift bias");
  verify->add_option("--bias-sigma", vf.options.bias_sigma, "Noise level of the drift bias experiment");
  verify->add_option("--misfire-trials", vf.options.misfire_trials, "Trials per misfire point");
  verify->add_option("--sequences", vf.options.sequences, "Random sequences for the closed-form check");
  verify->add_option("--only", vf.options.only, "Restrict to these groups")
      ->check(CLI::IsMember(verify_group_names()))
      ->delimiter(',');
  verify->add_option("--json-out", vf.json_out, "Write reports as JSONL here");

  ReplayFlags pf;
  auto* replay = app.add_subcommand("replay", "Re-gate a trace over a sweep of gamma values");
  replay->add_option("--trace", pf.trace, "Trace file written by run")->required();
  replay->add_option("--gammas", pf.gammas, "Comma-separated gamma values in (0,1)");
  replay->add_option("--alpha", pf.alpha, "Momentum decay (default: the trace's)");

  ReportFlags qf;
  auto* report = app.add_subcommand("report", "Summarise one or more traces");
  report->add_option("--trace", qf.traces, "Trace files")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kConfigError;
  }

  try {
    if (*run) return cmd_run(rf, out, err);
    if (*verify) return cmd_verify(vf, out);
    if (*replay) return cmd_replay(pf, out);
    if (*report) return cmd_report(qf, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  }
  return kConfigError;
}

}  // namespace mur::cli
