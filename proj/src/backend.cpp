#include "mur/backend.hpp"

#include <algorithm>
#include <cctype>

#include "mur/error.hpp"
#include "mur/http_backend.hpp"
#include "mur/mock_backend.hpp"

namespace mur {

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::StepBoundary: return "step_boundary";
    case FinishReason::AnswerPhrase: return "answer_phrase";
    case FinishReason::MaxTokens: return "max_tokens";
    case FinishReason::EndOfSequence: return "end_of_sequence";
  }
  return "step_boundary";
}

FinishReason finish_reason_from_string(std::string_view text) {
  if (text == "step_boundary") return FinishReason::StepBoundary;
  if (text == "answer_phrase") return FinishReason::AnswerPhrase;
  if (text == "max_tokens") return FinishReason::MaxTokens;
  if (text == "end_of_sequence") return FinishReason::EndOfSequence;
  throw Error(ErrorCode::SchemaError, "unknown finish reason '" + std::string(text) + "'");
}

void GenerationContext::validate() const {
  if (step_index != prior_steps.size() + 1) {
    throw Error(ErrorCode::Precondition, "step_index " + std::to_string(step_index) +
                                             " does not follow " +
                                             std::to_string(prior_steps.size()) + " prior steps");
  }
  if (temperature < 0.0) throw Error(ErrorCode::Precondition, "temperature must be >= 0");
  if (max_step_tokens == 0) throw Error(ErrorCode::Precondition, "max_step_tokens must be >= 1");
}

void BackendDescriptor::validate() const {
  if (kind == Kind::Http && (!endpoint_url || endpoint_url->empty())) {
    throw Error(ErrorCode::ConfigError, "http backend needs an endpoint URL");
  }
  if (kind == Kind::Mock && (!script_path || script_path->empty())) {
    throw Error(ErrorCode::ConfigError, "mock backend needs a script path");
  }
  if (max_thinking_tokens == 0) throw Error(ErrorCode::ConfigError, "thinking budget must be >= 1");
}

std::unique_ptr<Backend> make_backend(const BackendDescriptor& descriptor) {
  descriptor.validate();
  if (descriptor.kind == BackendDescriptor::Kind::Http) {
    return std::make_unique<HttpBackend>(descriptor);
  }
  return std::make_unique<MockBackend>(Script::load(*descriptor.script_path),
                                       descriptor.max_thinking_tokens);
}

std::string render_instruction(const GenerationContext& ctx) {
  static constexpr std::string_view kPlaceholder = "{stepidx}";
  std::string out = ctx.instruction_suffix;
  const auto index = std::to_string(ctx.step_index);
  for (auto pos = out.find(kPlaceholder); pos != std::string::npos;
       pos = out.find(kPlaceholder, pos + index.size())) {
    out.replace(pos, kPlaceholder.size(), index);
  }
  return out;
}

std::string prompt_body(const GenerationContext& ctx) {
  std::string out = ctx.question;
  out += "\n";
  out += render_instruction(ctx);
  out += "\n\n";
  for (std::size_t i = 0; i < ctx.prior_steps.size(); ++i) {
    out += "Step " + std::to_string(i + 1) + ": " + ctx.prior_steps[i] + "\n";
  }
  if (ctx.feedback) {
    out += "[Feedback on Step " + std::to_string(ctx.step_index) + "]\n";
    out += "Draft: " + ctx.feedback->draft + "\n";
    out += "Critique: " + ctx.feedback->critique + "\n";
    out += "[End of feedback]\n";
  }
  return out;
}

std::string step_header(const GenerationContext& ctx) {
  return "Step " + std::to_string(ctx.step_index) + ":";
}

std::string build_prompt(const GenerationContext& ctx) { return prompt_body(ctx) + step_header(ctx); }

bool contains_answer_phrase(std::string_view text) {
  const auto it = std::search(text.begin(), text.end(), kAnswerPhrase.begin(), kAnswerPhrase.end(),
                              [](char a, char b) {
                                return std::tolower(static_cast<unsigned char>(a)) ==
                                       std::tolower(static_cast<unsigned char>(b));
                              });
  return it != text.end();
}

std::string completed_sentences(std::string_view text) {
  std::size_t keep = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    const bool at_end = i + 1 == text.size();
    if (at_end || std::isspace(static_cast<unsigned char>(text[i + 1]))) keep = i + 1;
  }
  return std::string(text.substr(0, keep));
}

}  // namespace mur
