#include "mur/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <thread>

#include "json.hpp"
#include "mur/rng.hpp"

namespace mur {

using nlohmann::json;

std::vector<DatasetItem> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open dataset " + path);
  std::vector<DatasetItem> items;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path + ":" + std::to_string(line_no) + ": ";
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::SchemaError, where + e.what());
    }
    if (!record.is_object() || !record.contains("id") || !record.contains("question") ||
        !record.contains("answer") || !record["question"].is_string()) {
      throw Error(ErrorCode::SchemaError, where + "expected {\"id\", \"question\", \"answer\"}");
    }
    DatasetItem item;
    item.id = record["id"].is_string() ? record["id"].get<std::string>() : record["id"].dump();
    item.question = record["question"].get<std::string>();
    item.gold_answer = record["answer"].is_string() ? record["answer"].get<std::string>() : record["answer"].dump();
    if (!seen.insert(item.id).second) throw Error(ErrorCode::SchemaError, where + "duplicate id " + item.id);
    items.push_back(std::move(item));
  }
  return items;
}

void RunConfig::validate() const {
  try {
    validate_alpha(alpha);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  validate_policy(policy);
  if (temperature < 0.0) throw Error(ErrorCode::ConfigError, "temperature must be >= 0");
  if (max_steps == 0) throw Error(ErrorCode::ConfigError, "max_steps must be >= 1");
  if (max_step_tokens == 0) throw Error(ErrorCode::ConfigError, "max_step_tokens must be >= 1");
  if (samples_per_query == 0) throw Error(ErrorCode::ConfigError, "samples must be >= 1");
  if (concurrency == 0) throw Error(ErrorCode::ConfigError, "concurrency must be >= 1");
  if (strategy.kind == StrategyConfig::Kind::GuidedSearch && strategy.n < 2) {
    throw Error(ErrorCode::ConfigError, "guided search needs n >= 2");
  }
  if (strategy.kind == StrategyConfig::Kind::CriticRefine && strategy.rounds < 1) {
    throw Error(ErrorCode::ConfigError, "critic rounds must be >= 1");
  }
}

std::string_view to_string(TerminatedBy reason) {
  return reason == TerminatedBy::Answer ? "answer" : "max_steps";
}

std::string_view to_string(TrajectoryStatus status) {
  return status == TrajectoryStatus::Completed ? "completed" : "failed";
}

std::uint32_t Trajectory::scaled_steps() const {
  return static_cast<std::uint32_t>(
      std::count_if(steps.begin(), steps.end(), [](const StepRecord& r) { return r.decision.scale; }));
}

namespace {

// Distinct stream for the strategy's sampling so candidates never reuse the
// first-pass seed.
constexpr std::uint64_t kStrategyStream = 0x5ca1e;

}  // namespace

Trajectory run_trajectory(const DatasetItem& item, std::uint32_t sample, const RunConfig& config,
                          const Backend& backend, const StrategyClients& clients) {
  Trajectory traj;
  traj.item_id = item.id;
  traj.sample = sample;
  traj.seed = sample_seed(config.master_seed, item.id, sample);

  const auto policy = reseed(config.policy, traj.seed);
  MomentumState momentum(config.alpha);
  RunningMeanState running_mean;
  std::vector<std::string> accepted;
  std::unique_ptr<LanguageModel> session;

  try {
    session = backend.open(SessionKey{item.id, sample, traj.seed});
    for (std::uint32_t t = 1; t <= config.max_steps; ++t) {
      GenerationContext ctx;
      ctx.question = item.question;
      ctx.prior_steps = accepted;
      ctx.step_index = t;
      ctx.instruction_suffix = config.instruction_suffix;
      ctx.temperature = config.temperature;
      ctx.max_step_tokens = config.max_step_tokens;
      ctx.seed = derive_seed(traj.seed, t);

      StepRecord rec;
      rec.step_index = t;
      auto first = session->generate_step(ctx);
      const auto m = step_uncertainty(first.tokens);
      rec.m = m.value();
      rec.tlc = token_level_confidence(first.tokens);
      rec.decision = gate(policy, momentum, running_mean, m, rec.tlc, t);
      rec.backbone_tokens = first.backbone_tokens;

      if (rec.decision.scale) {
        GenerationContext scaled_ctx = ctx;
        scaled_ctx.seed = derive_seed(*ctx.seed, kStrategyStream);
        auto outcome = apply_strategy(config.strategy, scaled_ctx, first, *session, clients);
        rec.backbone_tokens += outcome.backbone_tokens;
        rec.external_tokens = outcome.external_tokens;
        rec.step = outcome.chosen_step;
        rec.original = std::move(first);
        rec.outcome = std::move(outcome);
      } else {
        rec.step = std::move(first);
      }

      const auto kept = step_uncertainty(rec.step.tokens);
      rec.m_kept = kept.value();
      rec.M_before = momentum.value();
      momentum = momentum_update(momentum, kept);
      running_mean = running_mean_update(running_mean, kept);
      rec.M_after = momentum.value();

      traj.backbone_tokens += rec.backbone_tokens;
      traj.external_tokens += rec.external_tokens;
      accepted.push_back(rec.step.text);
      const bool answered = contains_answer_phrase(rec.step.text);
      if (answered) traj.final_answer = extract_answer(rec.step.text);
      traj.steps.push_back(std::move(rec));
      if (answered) {
        traj.terminated_by = TerminatedBy::Answer;
        break;
      }
    }
  } catch (const Error& e) {
    traj.status = TrajectoryStatus::Failed;
    traj.error_code = e.code();
    traj.error_message = e.what();
  }
  if (session) traj.billed_tokens = session->billed_tokens();
  traj.correct = traj.status == TrajectoryStatus::Completed && traj.terminated_by == TerminatedBy::Answer &&
                 traj.final_answer && check_answer(*traj.final_answer, item.gold_answer);
  return traj;
}

RunMetrics compute_metrics(const std::vector<Trajectory>& trajectories) {
  RunMetrics m;
  m.total = static_cast<std::uint32_t>(trajectories.size());
  std::uint32_t correct = 0;
  for (const auto& t : trajectories) {
    if (t.status == TrajectoryStatus::Failed) {
      ++m.failures;
      continue;
    }
    ++m.completed;
    correct += t.correct ? 1 : 0;
    m.total_steps += t.steps.size();
    m.total_scaled_steps += t.scaled_steps();
    m.total_backbone_tokens += t.backbone_tokens;
    m.total_external_tokens += t.external_tokens;
  }
  if (m.completed > 0) {
    const double n = m.completed;
    m.accuracy = correct / n;
    m.avg_backbone_tokens = static_cast<double>(m.total_backbone_tokens) / n;
    m.avg_external_tokens = static_cast<double>(m.total_external_tokens) / n;
    m.avg_steps = static_cast<double>(m.total_steps) / n;
    m.avg_scaled_steps = static_cast<double>(m.total_scaled_steps) / n;
  }
  return m;
}

RunResult run_dataset(const std::vector<DatasetItem>& items, const RunConfig& config,
                      const Backend& backend, const StrategyClients& clients) {
  if (items.empty()) throw Error(ErrorCode::Precondition, "dataset has no items");
  config.validate();

  const std::size_t samples = config.samples_per_query;
  const std::size_t jobs = items.size() * samples;
  RunResult result;
  result.trajectories.resize(jobs);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs; j = next++) {
      result.trajectories[j] = run_trajectory(items[j / samples], static_cast<std::uint32_t>(j % samples),
                                              config, backend, clients);
    }
  };
  const auto threads = std::min<std::size_t>(config.concurrency, jobs);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  result.metrics = compute_metrics(result.trajectories);
  return result;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Strips one "\cmd{...}" wrapper when it spans the whole string.
std::string unwrap(const std::string& s, const std::string& cmd) {
  const auto prefix = cmd + "{";
  if (s.rfind(prefix, 0) == 0 && s.size() > prefix.size() && s.back() == '}') {
    return s.substr(prefix.size(), s.size() - prefix.size() - 1);
  }
  return s;
}

}  // namespace

std::optional<std::string> extract_answer(const std::string& text) {
  const auto haystack = lower(text);
  const auto pos = haystack.rfind(kAnswerPhrase);
  if (pos == std::string::npos) return std::nullopt;
  std::string rest = text.substr(pos + kAnswerPhrase.size());
  if (const auto nl = rest.find('\n'); nl != std::string::npos) rest.resize(nl);
  rest = trim(rest);
  while (!rest.empty() && rest.front() == ':') rest = trim(rest.substr(1));
  while (!rest.empty() && std::string_view(".,;:!?").find(rest.back()) != std::string_view::npos) {
    rest.pop_back();
    rest = trim(rest);
  }
  if (rest.empty()) return std::nullopt;
  return rest;
}

std::string normalize_answer(const std::string& answer) {
  std::string s = trim(answer);
  for (const char* cmd : {"\\boxed", "\\text", "\\mathrm"}) s = trim(unwrap(s, cmd));
  s = lower(s);
  std::string out;
  for (char c : s) {
    if (c == '$' || c == '%' || c == ',') continue;
    out += c;
  }
  out = trim(out);
  while (!out.empty() && out.back() == '.') out.pop_back();
  out = trim(out);

  static const std::regex kChoice(R"(^(?:option\s+|choice\s+)?\(?([a-j])\)?$)");
  std::smatch match;
  if (std::regex_match(out, match, kChoice)) return match[1].str();
  return out;
}

std::optional<double> parse_numeric_answer(const std::string& normalized) {
  std::string s;
  for (char c : normalized) {
    if (!std::isspace(static_cast<unsigned char>(c))) s += c;
  }
  if (auto v = parse_double(s)) return v;
  static const std::regex kFrac(R"(^(-?)\\[dt]?frac\{([^{}]+)\}\{([^{}]+)\}$)");
  std::smatch match;
  std::string num;
  std::string den;
  bool negative = false;
  if (std::regex_match(s, match, kFrac)) {
    negative = match[1].length() > 0;
    num = match[2].str();
    den = match[3].str();
  } else if (const auto slash = s.find('/'); slash != std::string::npos) {
    num = s.substr(0, slash);
    den = s.substr(slash + 1);
  } else {
    return std::nullopt;
  }
  const auto n = parse_double(num);
  const auto d = parse_double(den);
  if (!n || !d || *d == 0.0) return std::nullopt;
  const double v = *n / *d;
  return negative ? -v : v;
}

bool check_answer(const std::string& predicted, const std::string& gold) {
  const auto p = normalize_answer(predicted);
  const auto g = normalize_answer(gold);
  if (p == g) return true;
  const auto pv = parse_numeric_answer(p);
  const auto gv = parse_numeric_answer(g);
  if (!pv || !gv) return false;
  return std::abs(*pv - *gv) <= 1e-6 * std::max(std::abs(*pv), std::abs(*gv));
}

std::vector<GateDecision> replay_gating(std::span<const double> ms, const ScalePolicy& policy,
                                        double alpha) {
  if (ms.empty()) throw Error(ErrorCode::Precondition, "replay trace is empty");
  MomentumState momentum(alpha);
  RunningMeanState running_mean;
  std::vector<GateDecision> out;
  out.reserve(ms.size());
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const StepUncertainty m(ms[i]);
    out.push_back(gate(policy, momentum, running_mean, m, std::exp(-ms[i]), static_cast<std::uint32_t>(i + 1)));
    momentum = momentum_update(momentum, m);
    running_mean = running_mean_update(running_mean, m);
  }
  return out;
}

}  // namespace mur
