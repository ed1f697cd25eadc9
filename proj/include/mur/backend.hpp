#pragma once

// Step-wise generation interface shared by the HTTP and scripted backends,
// plus the prompt layout both of them agree on.

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mur/uncertainty.hpp"

namespace mur {

inline constexpr std::string_view kDefaultInstruction =
    "Always end your solution with the phrase \"the answer is\" followed by your final answer. "
    "Start your solution with \"Step {stepidx}:\"";
inline constexpr std::string_view kAnswerPhrase = "the answer is";
inline constexpr std::string_view kThinkingPrefix = "Okay, so I need to";
inline constexpr std::string_view kStepStop = "\nStep ";
inline constexpr std::uint32_t kMaxThinkingTokens = 2048;
inline constexpr double kDefaultTemperature = 0.6;

enum class FinishReason { StepBoundary, AnswerPhrase, MaxTokens, EndOfSequence };

std::string_view to_string(FinishReason reason);
FinishReason finish_reason_from_string(std::string_view text);

/// A critique of a draft step, injected before regenerating that step.
struct Feedback {
  std::string draft;
  std::string critique;
};

struct GenerationContext {
  std::string question;
  std::vector<std::string> prior_steps;
  std::uint32_t step_index = 1;
  std::string instruction_suffix{kDefaultInstruction};
  double temperature = kDefaultTemperature;
  std::uint32_t max_step_tokens = 512;
  bool thinking = false;
  std::optional<Feedback> feedback;
  /// Forwarded to servers that honour sampling seeds.
  std::optional<std::uint64_t> seed;

  /// Throws Precondition unless step_index == prior_steps.size() + 1.
  void validate() const;
};

struct StepGeneration {
  std::string text;
  std::vector<TokenLogProb> tokens;
  FinishReason finish_reason = FinishReason::StepBoundary;
  std::uint32_t backbone_tokens = 0;  // tokens.size() + thinking_tokens
  std::uint32_t thinking_tokens = 0;
  bool thinking_truncated = false;
};

struct BackendDescriptor {
  enum class Kind { Http, Mock };

  Kind kind = Kind::Mock;
  std::optional<std::string> endpoint_url;  // full completions URL for http
  std::optional<std::string> model_name;
  std::optional<std::string> script_path;   // mock script
  std::chrono::milliseconds timeout{60'000};
  std::uint32_t retry_limit = 3;
  std::chrono::milliseconds initial_backoff{250};
  /// Name of the environment variable holding the bearer token.
  std::string api_key_env = "MUR_API_KEY";
  /// Server accepts n > 1 in one request; otherwise candidates fan out.
  bool supports_n = true;
  bool thinking_capable = true;
  std::uint32_t max_thinking_tokens = kMaxThinkingTokens;
  std::string think_open = "<think>\n";
  std::string think_close = "\n</think>\n\n";

  /// Throws ConfigError (http without endpoint, mock without script).
  void validate() const;
};

/// Identifies one trajectory; backends open a fresh session per trajectory.
struct SessionKey {
  std::string item_id;
  std::uint32_t sample = 0;
  std::uint64_t seed = 0;
};

/// A per-trajectory generation session. Sessions are not shared across
/// threads; the owning Backend is.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual StepGeneration generate_step(const GenerationContext& ctx) = 0;
  virtual std::vector<StepGeneration> generate_candidates(const GenerationContext& ctx,
                                                          std::uint32_t n) = 0;
  virtual StepGeneration generate_thinking_step(const GenerationContext& ctx) = 0;
  virtual bool supports_thinking() const = 0;
  /// Backbone tokens produced by this session so far.
  virtual std::uint64_t billed_tokens() const = 0;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::unique_ptr<LanguageModel> open(const SessionKey& key) const = 0;
};

std::unique_ptr<Backend> make_backend(const BackendDescriptor& descriptor);

// ---- prompt layout ---------------------------------------------------------

/// Instruction suffix with {stepidx} replaced by the step index.
std::string render_instruction(const GenerationContext& ctx);

/// Question, instruction, accepted steps and any feedback block.
std::string prompt_body(const GenerationContext& ctx);

/// "Step {t}:" opener that the model continues.
std::string step_header(const GenerationContext& ctx);

std::string build_prompt(const GenerationContext& ctx);

bool contains_answer_phrase(std::string_view text);

/// Keeps only sentences closed by '.', '!' or '?' followed by whitespace or
/// end of text; the trailing fragment is dropped.
std::string completed_sentences(std::string_view text);

}  // namespace mur
