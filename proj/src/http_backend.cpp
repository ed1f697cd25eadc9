#include "mur/http_backend.hpp"

#include <algorithm>
#include <cstdlib>
#include <future>
#include <regex>
#include <thread>

#include "httplib.h"
#include "mur/error.hpp"

namespace mur {

using nlohmann::json;

HttpTarget parse_http_url(const std::string& url, const std::string& default_path) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch match;
  if (!std::regex_match(url, match, kUrl)) {
    throw Error(ErrorCode::ConfigError, "not an http(s) URL: " + url);
  }
  HttpTarget target{match[1].str(), match[2].str()};
  if (target.path.empty() || target.path == "/") target.path = default_path;
  return target;
}

std::string bearer_token_from_env(const std::string& variable) {
  if (variable.empty()) return {};
  const char* value = std::getenv(variable.c_str());
  return value ? std::string(value) : std::string();
}

JsonHttpClient::JsonHttpClient(const std::string& url, const std::string& default_path,
                               std::chrono::milliseconds timeout, std::uint32_t retry_limit,
                               std::chrono::milliseconds initial_backoff, std::string bearer_token)
    : target_(parse_http_url(url, default_path)),
      timeout_(timeout),
      retry_limit_(retry_limit),
      initial_backoff_(initial_backoff),
      bearer_token_(std::move(bearer_token)) {}

json JsonHttpClient::post(const json& body) const {
  httplib::Client client(target_.base);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  httplib::Headers headers;
  if (!bearer_token_.empty()) headers.emplace("Authorization", "Bearer " + bearer_token_);
  const std::string payload = body.dump();

  std::string last_failure;
  auto backoff = initial_backoff_;
  for (std::uint32_t attempt = 0; attempt <= retry_limit_; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    ++attempts_;
    auto result = client.Post(target_.path, headers, payload, "application/json");
    if (!result) {
      last_failure = "transport error: " + httplib::to_string(result.error());
      continue;
    }
    const int status = result->status;
    if (status == 429 || status >= 500) {
      last_failure = "HTTP " + std::to_string(status);
      continue;
    }
    if (status >= 400) {
      const auto& text = result->body;
      if (text.find("context length") != std::string::npos ||
          text.find("context window") != std::string::npos ||
          text.find("maximum context") != std::string::npos) {
        throw Error(ErrorCode::ContextOverflow, "HTTP " + std::to_string(status) + ": " + text);
      }
      throw Error(ErrorCode::BackendRejected, "HTTP " + std::to_string(status) + ": " + text);
    }
    try {
      return json::parse(result->body);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::BackendRejected, std::string("malformed JSON response: ") + e.what());
    }
  }
  throw Error(ErrorCode::BackendUnreachable, target_.base + target_.path + " after " +
                                                 std::to_string(retry_limit_ + 1) +
                                                 " attempts: " + last_failure);
}

json build_completion_request(const BackendDescriptor& descriptor, const GenerationContext& ctx,
                              const std::string& prompt, std::uint32_t max_tokens,
                              const std::vector<std::string>& stop, std::uint32_t n) {
  json request = {
      {"prompt", prompt},
      {"temperature", ctx.temperature},
      {"max_tokens", max_tokens},
      {"stop", stop},
      {"logprobs", 1},
      {"n", n},
  };
  if (descriptor.model_name) request["model"] = *descriptor.model_name;
  if (ctx.seed) request["seed"] = *ctx.seed;
  return request;
}

std::vector<CompletionChoice> parse_completion_response(const json& response) {
  if (!response.contains("choices") || !response["choices"].is_array()) {
    throw Error(ErrorCode::BackendRejected, "response has no choices array");
  }
  std::vector<CompletionChoice> out;
  for (const auto& raw : response["choices"]) {
    CompletionChoice choice;
    choice.index = raw.value("index", static_cast<std::uint32_t>(out.size()));
    choice.text = raw.value("text", std::string());
    if (raw.contains("finish_reason") && raw["finish_reason"].is_string()) {
      choice.finish_reason = raw["finish_reason"].get<std::string>();
    }
    // vLLM reports the matched stop string (or an EOS token id) here; OpenAI
    // omits it, in which case "stop" is taken as a stop-sequence hit.
    choice.stopped_on_sequence = !raw.contains("stop_reason") || raw["stop_reason"].is_string();

    const auto it = raw.find("logprobs");
    if (it == raw.end() || !it->is_object() || !it->contains("token_logprobs") ||
        !(*it)["token_logprobs"].is_array()) {
      throw Error(ErrorCode::MissingLogProbs, "completion choice carries no token logprobs");
    }
    const auto& lps = (*it)["token_logprobs"];
    const json empty = json::array();
    const auto& toks = it->contains("tokens") && (*it)["tokens"].is_array() ? (*it)["tokens"] : empty;
    for (std::size_t i = 0; i < lps.size(); ++i) {
      if (!lps[i].is_number()) {
        throw Error(ErrorCode::MissingLogProbs, "token " + std::to_string(i) + " has no logprob");
      }
      const std::string token = i < toks.size() && toks[i].is_string() ? toks[i].get<std::string>() : "";
      choice.tokens.push_back(TokenLogProb::make(token, lps[i].get<double>()));
    }
    out.push_back(std::move(choice));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  return out;
}

StepGeneration to_step_generation(CompletionChoice choice) {
  if (choice.tokens.empty()) {
    throw Error(ErrorCode::EmptyStep, "server returned an empty step");
  }
  StepGeneration out;
  out.text = std::move(choice.text);
  out.tokens = std::move(choice.tokens);
  if (contains_answer_phrase(out.text)) {
    out.finish_reason = FinishReason::AnswerPhrase;
  } else if (choice.finish_reason == "length") {
    out.finish_reason = FinishReason::MaxTokens;
  } else if (choice.finish_reason == "stop" && choice.stopped_on_sequence) {
    out.finish_reason = FinishReason::StepBoundary;
  } else {
    out.finish_reason = FinishReason::EndOfSequence;
  }
  out.backbone_tokens = static_cast<std::uint32_t>(out.tokens.size());
  return out;
}

namespace {

class HttpSession : public LanguageModel {
 public:
  HttpSession(const BackendDescriptor& descriptor, const std::string& token)
      : descriptor_(descriptor),
        client_(*descriptor.endpoint_url, "/v1/completions", descriptor.timeout,
                descriptor.retry_limit, descriptor.initial_backoff, token) {}

  StepGeneration generate_step(const GenerationContext& ctx) override {
    ctx.validate();
    auto choices = complete(ctx, build_prompt(ctx), ctx.max_step_tokens, 1);
    return bill(to_step_generation(std::move(choices.front())));
  }

  std::vector<StepGeneration> generate_candidates(const GenerationContext& ctx,
                                                  std::uint32_t n) override {
    if (n == 0) throw Error(ErrorCode::Precondition, "candidate count must be >= 1");
    ctx.validate();
    const auto prompt = build_prompt(ctx);
    std::vector<CompletionChoice> choices;
    if (descriptor_.supports_n) {
      choices = complete(ctx, prompt, ctx.max_step_tokens, n);
      if (choices.size() < n) {
        throw Error(ErrorCode::BackendRejected, "asked for " + std::to_string(n) +
                                                    " candidates, got " + std::to_string(choices.size()));
      }
      choices.resize(n);
    } else {
      std::vector<std::future<std::vector<CompletionChoice>>> pending;
      for (std::uint32_t i = 0; i < n; ++i) {
        GenerationContext variant = ctx;
        if (variant.seed) *variant.seed += i;
        pending.push_back(std::async(std::launch::async, [this, variant, prompt] {
          return complete(variant, prompt, variant.max_step_tokens, 1);
        }));
      }
      for (auto& f : pending) choices.push_back(std::move(f.get().front()));
    }
    std::vector<StepGeneration> out;
    for (auto& c : choices) out.push_back(bill(to_step_generation(std::move(c))));
    return out;
  }

  StepGeneration generate_thinking_step(const GenerationContext& ctx) override {
    if (!supports_thinking()) {
      throw Error(ErrorCode::ThinkingUnsupported, "backend is not configured for thinking mode");
    }
    ctx.validate();
    std::string prompt = prompt_body(ctx) + descriptor_.think_open + std::string(kThinkingPrefix);
    std::string close_tag = descriptor_.think_close;
    close_tag.erase(0, close_tag.find_first_not_of(" \n"));
    close_tag.erase(close_tag.find_last_not_of(" \n") + 1);

    auto thought = complete(ctx, prompt, descriptor_.max_thinking_tokens, 1, {close_tag}).front();
    const auto thinking_tokens = static_cast<std::uint32_t>(thought.tokens.size());
    const bool truncated = thought.finish_reason == "length";

    prompt += thought.text + descriptor_.think_close + step_header(ctx);
    auto step = to_step_generation(complete(ctx, prompt, ctx.max_step_tokens, 1).front());
    if (auto cut = completed_sentences(step.text); !cut.empty()) step.text = std::move(cut);
    step.thinking_tokens = std::min(thinking_tokens, descriptor_.max_thinking_tokens);
    step.thinking_truncated = truncated;
    step.backbone_tokens = static_cast<std::uint32_t>(step.tokens.size()) + step.thinking_tokens;
    return bill(std::move(step));
  }

  bool supports_thinking() const override { return descriptor_.thinking_capable; }
  std::uint64_t billed_tokens() const override { return billed_.load(); }

 private:
  std::vector<CompletionChoice> complete(const GenerationContext& ctx, const std::string& prompt,
                                         std::uint32_t max_tokens, std::uint32_t n,
                                         std::vector<std::string> stop = {std::string(kStepStop)}) const {
    const auto request = build_completion_request(descriptor_, ctx, prompt, max_tokens, stop, n);
    auto choices = parse_completion_response(client_.post(request));
    if (choices.empty()) throw Error(ErrorCode::BackendRejected, "response has no choices");
    return choices;
  }

  StepGeneration bill(StepGeneration g) {
    billed_ += g.backbone_tokens;
    return g;
  }

  const BackendDescriptor& descriptor_;
  JsonHttpClient client_;
  std::atomic<std::uint64_t> billed_{0};
};

}  // namespace

HttpBackend::HttpBackend(BackendDescriptor descriptor)
    : descriptor_(std::move(descriptor)), bearer_token_(bearer_token_from_env(descriptor_.api_key_env)) {
  descriptor_.validate();
  parse_http_url(*descriptor_.endpoint_url, "/v1/completions");
}

std::unique_ptr<LanguageModel> HttpBackend::open(const SessionKey&) const {
  return std::make_unique<HttpSession>(descriptor_, bearer_token_);
}

}  // namespace mur
