#include "mur/strategies.hpp"

#include <cmath>
#include <future>

#include "mur/error.hpp"

namespace mur {

using nlohmann::json;

json to_json(const JudgeRequest& request) {
  return json{{"question", request.question},
              {"prior_steps", request.prior_steps},
              {"candidate_step", request.candidate_step}};
}

ScoreResult ScriptedScorer::score(const JudgeRequest& request) const {
  const auto* entry = script_->find_score(request.candidate_step);
  if (!entry) {
    throw Error(ErrorCode::ScorerFailure, "no scripted score for \"" + request.candidate_step + "\"");
  }
  return ScoreResult{entry->score, entry->tokens_used};
}

CritiqueResult ScriptedCritic::critique(const JudgeRequest& request) const {
  const auto* entry = script_->find_critic(request.candidate_step);
  if (!entry) {
    throw Error(ErrorCode::CriticFailure, "no scripted critique for \"" + request.candidate_step + "\"");
  }
  return CritiqueResult{entry->feedback, entry->tokens_used};
}

ScoreResult HttpScorer::score(const JudgeRequest& request) const {
  const auto response = client_->post(to_json(request));
  if (!response.contains("score") || !response["score"].is_number()) {
    throw Error(ErrorCode::ScorerFailure, "scorer response has no numeric score");
  }
  return ScoreResult{response["score"].get<double>(), response.value("tokens_used", 0u)};
}

CritiqueResult HttpCritic::critique(const JudgeRequest& request) const {
  const auto response = client_->post(to_json(request));
  if (!response.contains("feedback_text") || !response["feedback_text"].is_string()) {
    throw Error(ErrorCode::CriticFailure, "critic response has no feedback_text");
  }
  return CritiqueResult{response["feedback_text"].get<std::string>(), response.value("tokens_used", 0u)};
}

namespace {

JudgeRequest judge_request(const GenerationContext& ctx, const std::string& step) {
  return JudgeRequest{ctx.question, ctx.prior_steps, step};
}

}  // namespace

StrategyOutcome guided_search(const GenerationContext& ctx, std::uint32_t n, LanguageModel& model,
                              const ScorerClient& scorer) {
  if (n < 2) throw Error(ErrorCode::Precondition, "guided search needs n >= 2");
  auto candidates = model.generate_candidates(ctx, n);

  std::vector<std::future<ScoreResult>> pending;
  pending.reserve(candidates.size());
  for (const auto& c : candidates) {
    pending.push_back(std::async(std::launch::async, [&scorer, request = judge_request(ctx, c.text)] {
      return scorer.score(request);
    }));
  }

  StrategyOutcome outcome;
  outcome.strategy_tag = "bon";
  outcome.candidates_considered = static_cast<std::uint32_t>(candidates.size());
  outcome.rounds = 1;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    ScoreResult result;
    try {
      result = pending[i].get();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ScorerFailure) throw;
      throw Error(ErrorCode::ScorerFailure, "candidate " + std::to_string(i) + ": " + e.what());
    }
    if (!std::isfinite(result.score)) {
      throw Error(ErrorCode::ScorerFailure, "candidate " + std::to_string(i) + " scored non-finite");
    }
    outcome.scores.push_back(result.score);
    outcome.external_tokens += result.tokens_used;
    outcome.backbone_tokens += candidates[i].backbone_tokens;
    if (i == 0 || result.score > outcome.scores[outcome.chosen_index]) {
      outcome.chosen_index = static_cast<std::uint32_t>(i);
    }
  }
  outcome.chosen_step = std::move(candidates[outcome.chosen_index]);
  return outcome;
}

StrategyOutcome critic_refine(const GenerationContext& ctx, const StepGeneration& initial_step,
                              LanguageModel& model, const CriticClient& critic,
                              std::uint32_t max_rounds) {
  if (max_rounds < 1) throw Error(ErrorCode::Precondition, "critic needs max_rounds >= 1");
  StrategyOutcome outcome;
  outcome.strategy_tag = "critic";
  outcome.candidates_considered = 1;
  StepGeneration current = initial_step;
  for (std::uint32_t round = 0; round < max_rounds; ++round) {
    CritiqueResult critique;
    try {
      critique = critic.critique(judge_request(ctx, current.text));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::CriticFailure) throw;
      throw Error(ErrorCode::CriticFailure, e.what());
    }
    outcome.external_tokens += critique.tokens_used;
    GenerationContext revised = ctx;
    revised.feedback = Feedback{current.text, critique.feedback_text};
    current = model.generate_step(revised);
    outcome.backbone_tokens += current.backbone_tokens;
    ++outcome.rounds;
  }
  outcome.chosen_step = std::move(current);
  return outcome;
}

StrategyOutcome thinking_switch(const GenerationContext& ctx, LanguageModel& model) {
  if (!model.supports_thinking()) {
    throw Error(ErrorCode::ThinkingUnsupported, "backend cannot switch into thinking mode");
  }
  GenerationContext thinking = ctx;
  thinking.thinking = true;
  StrategyOutcome outcome;
  outcome.strategy_tag = "think";
  outcome.chosen_step = model.generate_thinking_step(thinking);
  outcome.backbone_tokens = outcome.chosen_step.backbone_tokens;
  outcome.candidates_considered = 1;
  outcome.rounds = 1;
  return outcome;
}

std::string strategy_name(StrategyConfig::Kind kind) {
  switch (kind) {
    case StrategyConfig::Kind::GuidedSearch: return "bon";
    case StrategyConfig::Kind::CriticRefine: return "critic";
    case StrategyConfig::Kind::ThinkingSwitch: return "think";
  }
  return "bon";
}

StrategyOutcome apply_strategy(const StrategyConfig& config, const GenerationContext& ctx,
                               const StepGeneration& initial_step, LanguageModel& model,
                               const StrategyClients& clients) {
  switch (config.kind) {
    case StrategyConfig::Kind::GuidedSearch:
      if (!clients.scorer) throw Error(ErrorCode::ConfigError, "guided search needs a scorer");
      return guided_search(ctx, config.n, model, *clients.scorer);
    case StrategyConfig::Kind::CriticRefine:
      if (!clients.critic) throw Error(ErrorCode::ConfigError, "critic strategy needs a critic");
      return critic_refine(ctx, initial_step, model, *clients.critic, config.rounds);
    case StrategyConfig::Kind::ThinkingSwitch:
      return thinking_switch(ctx, model);
  }
  throw Error(ErrorCode::ConfigError, "unknown strategy");
}

}  // namespace mur
