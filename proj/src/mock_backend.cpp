#include "mur/mock_backend.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mur/error.hpp"

namespace mur {

using nlohmann::json;

namespace {

ScriptEntry::Kind kind_from_string(const std::string& kind) {
  if (kind == "step") return ScriptEntry::Kind::Step;
  if (kind == "candidates") return ScriptEntry::Kind::Candidates;
  if (kind == "thinking") return ScriptEntry::Kind::Thinking;
  if (kind == "refine") return ScriptEntry::Kind::Refine;
  if (kind == "critic") return ScriptEntry::Kind::Critic;
  if (kind == "score") return ScriptEntry::Kind::Score;
  throw Error(ErrorCode::SchemaError, "unknown record kind '" + kind + "'");
}

std::string kind_name(ScriptEntry::Kind kind) {
  switch (kind) {
    case ScriptEntry::Kind::Step: return "step";
    case ScriptEntry::Kind::Candidates: return "candidates";
    case ScriptEntry::Kind::Thinking: return "thinking";
    case ScriptEntry::Kind::Refine: return "refine";
    case ScriptEntry::Kind::Critic: return "critic";
    case ScriptEntry::Kind::Score: return "score";
  }
  return "?";
}

ScriptedText parse_output(const std::string& text, const json& logprobs, const json* tokens) {
  ScriptedText out;
  out.text = text;
  out.logprobs = logprobs.get<std::vector<double>>();
  if (out.logprobs.empty()) throw Error(ErrorCode::SchemaError, "scripted step has no logprobs");
  for (double lp : out.logprobs) {
    try {
      validate_logprob(lp);
    } catch (const Error& e) {
      throw Error(ErrorCode::SchemaError, e.what());
    }
  }
  if (tokens) {
    out.tokens = tokens->get<std::vector<std::string>>();
    if (out.tokens.size() != out.logprobs.size()) {
      throw Error(ErrorCode::SchemaError, "tokens and logprobs differ in length");
    }
  } else {
    out.tokens.assign(out.logprobs.size(), std::string());
  }
  return out;
}

ScriptEntry parse_entry(const json& record) {
  ScriptEntry entry;
  entry.kind = kind_from_string(record.at("kind").get<std::string>());
  if (record.contains("context_key")) entry.context_key = record["context_key"].get<std::string>();
  if (record.contains("sample")) entry.sample = record["sample"].get<std::uint32_t>();
  if (record.contains("after")) entry.after = record["after"].get<std::string>();
  if (record.contains("finish")) entry.finish = finish_reason_from_string(record["finish"].get<std::string>());

  const json* tokens = record.contains("tokens") ? &record["tokens"] : nullptr;
  switch (entry.kind) {
    case ScriptEntry::Kind::Step:
    case ScriptEntry::Kind::Refine:
    case ScriptEntry::Kind::Thinking:
      if (entry.context_key.empty()) throw Error(ErrorCode::SchemaError, "missing context_key");
      entry.outputs.push_back(parse_output(record.at("text").get<std::string>(), record.at("logprobs"), tokens));
      entry.thinking_tokens = record.value("thinking_tokens", 0u);
      break;
    case ScriptEntry::Kind::Candidates: {
      if (entry.context_key.empty()) throw Error(ErrorCode::SchemaError, "missing context_key");
      const auto& texts = record.at("texts");
      const auto& logprobs = record.at("logprobs");
      if (texts.size() != logprobs.size() || texts.empty()) {
        throw Error(ErrorCode::SchemaError, "texts and logprobs must be non-empty and aligned");
      }
      for (std::size_t i = 0; i < texts.size(); ++i) {
        const json* tok = tokens ? &(*tokens)[i] : nullptr;
        entry.outputs.push_back(parse_output(texts[i].get<std::string>(), logprobs[i], tok));
      }
      break;
    }
    case ScriptEntry::Kind::Score:
      entry.step_text = record.at("step_text").get<std::string>();
      entry.score = record.at("score").get<double>();
      entry.tokens_used = record.value("tokens_used", 0u);
      break;
    case ScriptEntry::Kind::Critic:
      entry.step_text = record.at("step_text").get<std::string>();
      entry.feedback = record.at("feedback").get<std::string>();
      entry.tokens_used = record.value("tokens_used", 0u);
      break;
  }
  return entry;
}

StepGeneration to_generation(const ScriptedText& scripted, std::optional<FinishReason> finish) {
  StepGeneration out;
  out.text = scripted.text;
  for (std::size_t i = 0; i < scripted.logprobs.size(); ++i) {
    out.tokens.push_back(TokenLogProb{scripted.tokens[i], scripted.logprobs[i]});
  }
  if (contains_answer_phrase(out.text)) {
    out.finish_reason = FinishReason::AnswerPhrase;
  } else {
    out.finish_reason = finish.value_or(FinishReason::StepBoundary);
  }
  out.backbone_tokens = static_cast<std::uint32_t>(out.tokens.size());
  return out;
}

std::string joined(const std::vector<std::string>& steps) {
  std::string out;
  for (const auto& s : steps) {
    out += s;
    out += '\n';
  }
  return out;
}

class MockSession : public LanguageModel {
 public:
  MockSession(std::shared_ptr<const Script> script, SessionKey key, std::uint32_t max_thinking)
      : script_(std::move(script)), key_(std::move(key)), max_thinking_(max_thinking) {}

  StepGeneration generate_step(const GenerationContext& ctx) override {
    ctx.validate();
    const auto kind = ctx.feedback ? ScriptEntry::Kind::Refine : ScriptEntry::Kind::Step;
    const auto& entry = next(ctx, kind);
    return bill(to_generation(entry.outputs.front(), entry.finish));
  }

  std::vector<StepGeneration> generate_candidates(const GenerationContext& ctx,
                                                  std::uint32_t n) override {
    if (n == 0) throw Error(ErrorCode::Precondition, "candidate count must be >= 1");
    ctx.validate();
    const auto& entry = next(ctx, ScriptEntry::Kind::Candidates);
    if (entry.outputs.size() < n) {
      throw Error(ErrorCode::ScriptExhausted, "script holds " + std::to_string(entry.outputs.size()) +
                                                  " candidates for " + key_for(ctx) + ", asked for " +
                                                  std::to_string(n));
    }
    std::vector<StepGeneration> out;
    for (std::uint32_t i = 0; i < n; ++i) out.push_back(bill(to_generation(entry.outputs[i], entry.finish)));
    return out;
  }

  StepGeneration generate_thinking_step(const GenerationContext& ctx) override {
    if (!supports_thinking()) {
      throw Error(ErrorCode::ThinkingUnsupported, "script has no thinking records");
    }
    ctx.validate();
    const auto& entry = next(ctx, ScriptEntry::Kind::Thinking);
    StepGeneration out = to_generation(entry.outputs.front(), entry.finish);
    if (auto cut = completed_sentences(out.text); !cut.empty()) out.text = std::move(cut);
    out.thinking_tokens = std::min(entry.thinking_tokens, max_thinking_);
    out.thinking_truncated = entry.thinking_tokens > max_thinking_;
    out.backbone_tokens = static_cast<std::uint32_t>(out.tokens.size()) + out.thinking_tokens;
    return bill(std::move(out));
  }

  bool supports_thinking() const override { return script_->has_kind(ScriptEntry::Kind::Thinking); }

  std::uint64_t billed_tokens() const override { return billed_; }

 private:
  std::string key_for(const GenerationContext& ctx) const {
    return context_key(key_.item_id, ctx.step_index);
  }

  const ScriptEntry& next(const GenerationContext& ctx, ScriptEntry::Kind kind) {
    const auto key = key_for(ctx);
    const auto history = joined(ctx.prior_steps);
    std::vector<const ScriptEntry*> best;
    int best_rank = -1;
    for (const auto& e : script_->entries()) {
      if (e.kind != kind || e.context_key != key) continue;
      if (e.sample && *e.sample != key_.sample) continue;
      if (e.after && history.find(*e.after) == std::string::npos) continue;
      const int rank = (e.sample ? 2 : 0) + (e.after ? 1 : 0);
      if (rank > best_rank) {
        best.clear();
        best_rank = rank;
      }
      if (rank == best_rank) best.push_back(&e);
    }
    auto& cursor = cursors_[{key, kind}];
    if (cursor >= best.size()) {
      throw Error(ErrorCode::ScriptExhausted,
                  "no " + kind_name(kind) + " record left for " + key + " (sample " +
                      std::to_string(key_.sample) + ")");
    }
    return *best[cursor++];
  }

  StepGeneration bill(StepGeneration g) {
    billed_ += g.backbone_tokens;
    return g;
  }

  std::shared_ptr<const Script> script_;
  SessionKey key_;
  std::uint32_t max_thinking_;
  std::map<std::pair<std::string, ScriptEntry::Kind>, std::size_t> cursors_;
  std::uint64_t billed_ = 0;
};

}  // namespace

std::string context_key(const std::string& item_id, std::uint32_t step_index) {
  return item_id + "/" + std::to_string(step_index);
}

Script Script::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open script " + path);
  return parse(in, path);
}

Script Script::parse(std::istream& in, const std::string& source) {
  Script script;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      script.entries_.push_back(parse_entry(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::SchemaError, source + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::SchemaError, source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return script;
}

bool Script::has_kind(ScriptEntry::Kind kind) const {
  for (const auto& e : entries_) {
    if (e.kind == kind) return true;
  }
  return false;
}

const ScriptEntry* Script::find_score(const std::string& step_text) const {
  for (const auto& e : entries_) {
    if (e.kind == ScriptEntry::Kind::Score && e.step_text == step_text) return &e;
  }
  return nullptr;
}

const ScriptEntry* Script::find_critic(const std::string& step_text) const {
  for (const auto& e : entries_) {
    if (e.kind == ScriptEntry::Kind::Critic && e.step_text == step_text) return &e;
  }
  return nullptr;
}

MockBackend::MockBackend(Script script, std::uint32_t max_thinking_tokens)
    : MockBackend(std::make_shared<const Script>(std::move(script)), max_thinking_tokens) {}

MockBackend::MockBackend(std::shared_ptr<const Script> script, std::uint32_t max_thinking_tokens)
    : script_(std::move(script)), max_thinking_tokens_(max_thinking_tokens) {}

std::unique_ptr<LanguageModel> MockBackend::open(const SessionKey& key) const {
  return std::make_unique<MockSession>(script_, key, max_thinking_tokens_);
}

}  // namespace mur
