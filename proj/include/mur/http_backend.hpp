#pragma once

// OpenAI-compatible /v1/completions client with per-token logprobs.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "mur/backend.hpp"

namespace mur {

struct HttpTarget {
  std::string base;  // scheme://host[:port]
  std::string path;  // request path, never empty
};

/// Splits a URL; an empty path becomes `default_path`.
HttpTarget parse_http_url(const std::string& url, const std::string& default_path);

/// JSON POST with retries on transport errors, 429 and 5xx (exponential
/// backoff). 4xx bodies mentioning the context window map to ContextOverflow,
/// other 4xx to BackendRejected.
class JsonHttpClient {
 public:
  JsonHttpClient(const std::string& url, const std::string& default_path,
                 std::chrono::milliseconds timeout, std::uint32_t retry_limit,
                 std::chrono::milliseconds initial_backoff, std::string bearer_token);

  nlohmann::json post(const nlohmann::json& body) const;

  std::uint32_t attempts_made() const { return attempts_.load(); }

 private:
  HttpTarget target_;
  std::chrono::milliseconds timeout_;
  std::uint32_t retry_limit_;
  std::chrono::milliseconds initial_backoff_;
  std::string bearer_token_;
  mutable std::atomic<std::uint32_t> attempts_{0};
};

/// Reads the bearer token from the named environment variable ("" if unset).
std::string bearer_token_from_env(const std::string& variable);

/// One parsed completion choice.
struct CompletionChoice {
  std::uint32_t index = 0;
  std::string text;
  std::vector<TokenLogProb> tokens;
  std::string finish_reason;   // as sent by the server
  bool stopped_on_sequence = false;
};

/// Deterministic request body for a completions call.
nlohmann::json build_completion_request(const BackendDescriptor& descriptor,
                                        const GenerationContext& ctx, const std::string& prompt,
                                        std::uint32_t max_tokens,
                                        const std::vector<std::string>& stop, std::uint32_t n);

/// Throws MissingLogProbs when any choice lacks per-token logprobs.
std::vector<CompletionChoice> parse_completion_response(const nlohmann::json& response);

/// Maps a parsed choice onto a step, deciding the finish reason.
StepGeneration to_step_generation(CompletionChoice choice);

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(BackendDescriptor descriptor);

  std::unique_ptr<LanguageModel> open(const SessionKey& key) const override;
  const BackendDescriptor& descriptor() const { return descriptor_; }

 private:
  BackendDescriptor descriptor_;
  std::string bearer_token_;
};

}  // namespace mur
