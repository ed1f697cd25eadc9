#pragma once

// Deterministic scripted backend.
//
// A script is a JSONL file; every line is one record. Generation records are
// addressed by context_key "<item_id>/<step_index>":
//
//   {"kind":"step",       "context_key":"q1/2", "text":"...", "logprobs":[-0.1,...]}
//   {"kind":"candidates", "context_key":"q1/2", "texts":["a","b"], "logprobs":[[...],[...]]}
//   {"kind":"thinking",   "context_key":"q1/2", "text":"...", "logprobs":[...], "thinking_tokens":900}
//   {"kind":"refine",     "context_key":"q1/2", "text":"...", "logprobs":[...]}
//
// Optional fields on generation records:
//   "tokens"  token strings, same length as logprobs (default: empty strings)
//   "after"   only matches when this substring occurs in the accepted prior steps
//   "sample"  only matches that sample index of the item
//   "finish"  finish reason when the text has no answer phrase (default step_boundary)
//
// Records for the external models are keyed by the text they judge:
//
//   {"kind":"score",  "step_text":"...", "score":0.9, "tokens_used":50}
//   {"kind":"critic", "step_text":"...", "feedback":"...", "tokens_used":120}
//
// When several records match, sample-specific beats generic and "after"
// beats unconditioned. Repeated requests for the same key and kind within one
// session consume the matching records in file order.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mur/backend.hpp"

namespace mur {

struct ScriptedText {
  std::string text;
  std::vector<double> logprobs;
  std::vector<std::string> tokens;
};

struct ScriptEntry {
  enum class Kind { Step, Candidates, Thinking, Refine, Critic, Score };

  Kind kind = Kind::Step;
  std::string context_key;
  std::optional<std::uint32_t> sample;
  std::optional<std::string> after;
  std::optional<FinishReason> finish;
  std::vector<ScriptedText> outputs;
  std::uint32_t thinking_tokens = 0;

  std::string step_text;
  std::string feedback;
  double score = 0.0;
  std::uint32_t tokens_used = 0;
};

class Script {
 public:
  static Script load(const std::string& path);
  static Script parse(std::istream& in, const std::string& source = "<script>");

  const std::vector<ScriptEntry>& entries() const { return entries_; }
  bool has_kind(ScriptEntry::Kind kind) const;
  const ScriptEntry* find_score(const std::string& step_text) const;
  const ScriptEntry* find_critic(const std::string& step_text) const;

 private:
  std::vector<ScriptEntry> entries_;
};

std::string context_key(const std::string& item_id, std::uint32_t step_index);

class MockBackend : public Backend {
 public:
  MockBackend(Script script, std::uint32_t max_thinking_tokens = kMaxThinkingTokens);
  explicit MockBackend(std::shared_ptr<const Script> script,
                       std::uint32_t max_thinking_tokens = kMaxThinkingTokens);

  std::unique_ptr<LanguageModel> open(const SessionKey& key) const override;
  const std::shared_ptr<const Script>& script() const { return script_; }

 private:
  std::shared_ptr<const Script> script_;
  std::uint32_t max_thinking_tokens_;
};

}  // namespace mur
