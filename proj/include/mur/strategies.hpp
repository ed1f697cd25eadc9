#pragma once

// Test-time scaling strategies that replace a flagged step: step-level
// best-of-N under an external scorer, critique-and-regenerate, and a switch
// into thinking mode. External-model tokens are tallied apart from backbone
// tokens.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mur/backend.hpp"
#include "mur/http_backend.hpp"
#include "mur/mock_backend.hpp"

namespace mur {

/// What an external judge sees: the question, accepted steps, and the step
/// under review.
struct JudgeRequest {
  std::string question;
  std::vector<std::string> prior_steps;
  std::string candidate_step;
};

struct ScoreResult {
  double score = 0.0;
  std::uint32_t tokens_used = 0;
};

struct CritiqueResult {
  std::string feedback_text;
  std::uint32_t tokens_used = 0;
};

/// Implementations must be safe to call concurrently.
class ScorerClient {
 public:
  virtual ~ScorerClient() = default;
  virtual ScoreResult score(const JudgeRequest& request) const = 0;
};

class CriticClient {
 public:
  virtual ~CriticClient() = default;
  virtual CritiqueResult critique(const JudgeRequest& request) const = 0;
};

/// Looks scores up by candidate text in a mock script.
class ScriptedScorer : public ScorerClient {
 public:
  explicit ScriptedScorer(std::shared_ptr<const Script> script) : script_(std::move(script)) {}
  ScoreResult score(const JudgeRequest& request) const override;

 private:
  std::shared_ptr<const Script> script_;
};

class ScriptedCritic : public CriticClient {
 public:
  explicit ScriptedCritic(std::shared_ptr<const Script> script) : script_(std::move(script)) {}
  CritiqueResult critique(const JudgeRequest& request) const override;

 private:
  std::shared_ptr<const Script> script_;
};

/// POST {question, prior_steps, candidate_step} -> {score, tokens_used}.
class HttpScorer : public ScorerClient {
 public:
  explicit HttpScorer(std::unique_ptr<JsonHttpClient> client) : client_(std::move(client)) {}
  ScoreResult score(const JudgeRequest& request) const override;

 private:
  std::unique_ptr<JsonHttpClient> client_;
};

/// POST {question, prior_steps, candidate_step} -> {feedback_text, tokens_used}.
class HttpCritic : public CriticClient {
 public:
  explicit HttpCritic(std::unique_ptr<JsonHttpClient> client) : client_(std::move(client)) {}
  CritiqueResult critique(const JudgeRequest& request) const override;

 private:
  std::unique_ptr<JsonHttpClient> client_;
};

nlohmann::json to_json(const JudgeRequest& request);

struct StrategyOutcome {
  StepGeneration chosen_step;
  std::uint64_t external_tokens = 0;
  /// Every backbone token generated inside the strategy, discarded
  /// candidates included.
  std::uint64_t backbone_tokens = 0;
  std::uint32_t candidates_considered = 0;
  std::uint32_t rounds = 0;
  std::uint32_t chosen_index = 0;
  std::vector<double> scores;
  std::string strategy_tag;
};

/// Samples n >= 2 candidates and keeps the best-scored one; ties go to the
/// lowest index.
StrategyOutcome guided_search(const GenerationContext& ctx, std::uint32_t n, LanguageModel& model,
                              const ScorerClient& scorer);

/// Critiques and regenerates the step `max_rounds` times; keeps the last
/// regeneration.
StrategyOutcome critic_refine(const GenerationContext& ctx, const StepGeneration& initial_step,
                              LanguageModel& model, const CriticClient& critic,
                              std::uint32_t max_rounds = 1);

/// Regenerates the step in thinking mode on the same backbone.
StrategyOutcome thinking_switch(const GenerationContext& ctx, LanguageModel& model);

struct StrategyConfig {
  enum class Kind { GuidedSearch, CriticRefine, ThinkingSwitch };
  Kind kind = Kind::GuidedSearch;
  std::uint32_t n = 4;
  std::uint32_t rounds = 1;
};

std::string strategy_name(StrategyConfig::Kind kind);  // bon | critic | think

struct StrategyClients {
  const ScorerClient* scorer = nullptr;
  const CriticClient* critic = nullptr;
};

StrategyOutcome apply_strategy(const StrategyConfig& config, const GenerationContext& ctx,
                               const StepGeneration& initial_step, LanguageModel& model,
                               const StrategyClients& clients);

}  // namespace mur
