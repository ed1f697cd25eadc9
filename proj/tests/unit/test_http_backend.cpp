#include <doctest.h>

#include <atomic>
#include <functional>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "mur/http_backend.hpp"
#include "mur/strategies.hpp"
#include "test_support.hpp"

using namespace mur;
using nlohmann::json;

namespace {

// In-process completions server; the handler sees each parsed request body.
class StubServer {
 public:
  using Handler = std::function<void(const json&, const httplib::Request&, httplib::Response&)>;

  explicit StubServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post(".*", [this](const httplib::Request& req, httplib::Response& res) {
      json body = json::parse(req.body);
      {
        std::lock_guard lock(mutex_);
        requests_.push_back(body);
        headers_.push_back(req.get_header_value("Authorization"));
      }
      handler_(body, req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string url(const std::string& path = "/v1/completions") const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }

  std::vector<json> requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
  }

  std::vector<std::string> auth_headers() const {
    std::lock_guard lock(mutex_);
    return headers_;
  }

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mutex_;
  std::vector<json> requests_;
  std::vector<std::string> headers_;
};

json choice(std::uint32_t index, const std::string& text, std::vector<double> lps,
            const std::string& finish = "stop") {
  std::vector<std::string> toks;
  for (std::size_t i = 0; i < lps.size(); ++i) toks.push_back("t" + std::to_string(i));
  return json{{"index", index},
              {"text", text},
              {"finish_reason", finish},
              {"logprobs", {{"tokens", toks}, {"token_logprobs", lps}}}};
}

BackendDescriptor descriptor_for(const StubServer& server) {
  BackendDescriptor d;
  d.kind = BackendDescriptor::Kind::Http;
  d.endpoint_url = server.url();
  d.model_name = "stub-model";
  d.timeout = std::chrono::milliseconds(2000);
  d.retry_limit = 2;
  d.initial_backoff = std::chrono::milliseconds(1);
  return d;
}

GenerationContext first_step() {
  GenerationContext ctx;
  ctx.question = "What is 2+2?";
  ctx.step_index = 1;
  ctx.seed = 17;
  return ctx;
}

}  // namespace

TEST_CASE("http step happy path") {
  StubServer server([](const json&, const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"choices", {choice(0, " Add two and two.", {-0.1, -0.3})}}}.dump(), "application/json");
  });
  HttpBackend backend(descriptor_for(server));
  auto session = backend.open({"q", 0, 0});
  const auto step = session->generate_step(first_step());
  CHECK(step.text == " Add two and two.");
  REQUIRE(step.tokens.size() == 2);
  CHECK(step.tokens[1].logprob == -0.3);
  CHECK(step.tokens[1].token_text == "t1");
  CHECK(step.finish_reason == FinishReason::StepBoundary);
  CHECK(session->billed_tokens() == 2);

  const auto req = server.requests().at(0);
  CHECK(req["prompt"] == build_prompt(first_step()));
  CHECK(req["temperature"] == 0.6);
  CHECK(req["max_tokens"] == 512);
  CHECK(req["stop"] == json::array({"\nStep "}));
  CHECK(req["logprobs"] == 1);
  CHECK(req["n"] == 1);
  CHECK(req["model"] == "stub-model");
  CHECK(req["seed"] == 17);
}

TEST_CASE("http finish reasons") {
  CompletionChoice c;
  c.tokens = {TokenLogProb{"a", -0.1}};
  c.finish_reason = "length";
  CHECK(to_step_generation(c).finish_reason == FinishReason::MaxTokens);
  c.finish_reason = "stop";
  c.stopped_on_sequence = true;
  CHECK(to_step_generation(c).finish_reason == FinishReason::StepBoundary);
  c.stopped_on_sequence = false;
  CHECK(to_step_generation(c).finish_reason == FinishReason::EndOfSequence);
  c.text = "so The Answer Is 4";
  CHECK(to_step_generation(c).finish_reason == FinishReason::AnswerPhrase);
  c.tokens.clear();
  CHECK_ERROR(to_step_generation(c), ErrorCode::EmptyStep);

  json eos = json{{"choices", {choice(0, "x", {-0.1})}}};
  eos["choices"][0]["stop_reason"] = 151645;
  CHECK_FALSE(parse_completion_response(eos).at(0).stopped_on_sequence);
  eos["choices"][0]["stop_reason"] = "\nStep ";
  CHECK(parse_completion_response(eos).at(0).stopped_on_sequence);
}

TEST_CASE("missing logprobs is not retried") {
  StubServer server([](const json&, const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices":[{"index":0,"text":"x","finish_reason":"stop"}]})", "application/json");
  });
  HttpBackend backend(descriptor_for(server));
  auto session = backend.open({"q", 0, 0});
  CHECK_ERROR(session->generate_step(first_step()), ErrorCode::MissingLogProbs);
  CHECK(server.requests().size() == 1);

  const auto null_lp = json::parse(
      R"({"choices":[{"index":0,"text":"x","logprobs":{"tokens":["x"],"token_logprobs":[null]}}]})");
  CHECK_ERROR(parse_completion_response(null_lp), ErrorCode::MissingLogProbs);
}

TEST_CASE("server errors are retried then reported unreachable") {
  StubServer server([](const json&, const httplib::Request&, httplib::Response& res) {
    res.status = 503;
    res.set_content("busy", "text/plain");
  });
  HttpBackend backend(descriptor_for(server));
  auto session = backend.open({"q", 0, 0});
  try {
    session->generate_step(first_step());
    FAIL("expected BackendUnreachable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BackendUnreachable);
    CHECK(e.retryable());
  }
  CHECK(server.requests().size() == 3);
}

TEST_CASE("a transient failure recovers") {
  std::atomic<int> calls{0};
  StubServer server([&](const json&, const httplib::Request&, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 429;
      return;
    }
    res.set_content(json{{"choices", {choice(0, "ok.", {-0.2})}}}.dump(), "application/json");
  });
  HttpBackend backend(descriptor_for(server));
  CHECK(backend.open({"q", 0, 0})->generate_step(first_step()).text == "ok.");
  CHECK(calls == 2);
}

TEST_CASE("context overflow and rejection") {
  StubServer server([](const json& body, const httplib::Request&, httplib::Response& res) {
    res.status = 400;
    if (body["max_tokens"] == 512) {
      res.set_content(R"({"error":"This model's maximum context length is 4096 tokens"})", "application/json");
    } else {
      res.set_content(R"({"error":"bad temperature"})", "application/json");
    }
  });
  HttpBackend backend(descriptor_for(server));
  auto session = backend.open({"q", 0, 0});
  CHECK_ERROR(session->generate_step(first_step()), ErrorCode::ContextOverflow);
  auto ctx = first_step();
  ctx.max_step_tokens = 64;
  CHECK_ERROR(session->generate_step(ctx), ErrorCode::BackendRejected);
  CHECK(server.requests().size() == 2);
}

TEST_CASE("nothing listening is unreachable") {
  BackendDescriptor d;
  d.kind = BackendDescriptor::Kind::Http;
  d.endpoint_url = "http://127.0.0.1:9/v1/completions";
  d.retry_limit = 1;
  d.initial_backoff = std::chrono::milliseconds(1);
  d.timeout = std::chrono::milliseconds(500);
  HttpBackend backend(d);
  CHECK_ERROR(backend.open({"q", 0, 0})->generate_step(first_step()), ErrorCode::BackendUnreachable);
}

TEST_CASE("candidates in one request with n") {
  StubServer server([](const json& body, const httplib::Request&, httplib::Response& res) {
    json choices = json::array();
    const int n = body["n"];
    // deliberately out of order; the client sorts by index
    for (int i = n - 1; i >= 0; --i) choices.push_back(choice(i, "c" + std::to_string(i), {-0.1 * (i + 1)}));
    res.set_content(json{{"choices", choices}}.dump(), "application/json");
  });
  HttpBackend backend(descriptor_for(server));
  auto session = backend.open({"q", 0, 0});
  const auto out = session->generate_candidates(first_step(), 3);
  REQUIRE(out.size() == 3);
  CHECK(out[0].text == "c0");
  CHECK(out[2].tokens[0].logprob == doctest::Approx(-0.3));
  CHECK(server.requests().size() == 1);
  CHECK(server.requests()[0]["n"] == 3);
  CHECK(session->billed_tokens() == 3);
}

TEST_CASE("candidates fan out when n is unsupported") {
  StubServer server([](const json& body, const httplib::Request&, httplib::Response& res) {
    const auto seed = body["seed"].get<std::uint64_t>();
    res.set_content(json{{"choices", {choice(0, "s" + std::to_string(seed), {-0.1})}}}.dump(), "application/json");
  });
  auto d = descriptor_for(server);
  d.supports_n = false;
  HttpBackend backend(d);
  const auto out = backend.open({"q", 0, 0})->generate_candidates(first_step(), 4);
  REQUIRE(out.size() == 4);
  CHECK(out[0].text == "s17");
  CHECK(out[3].text == "s20");
  const auto reqs = server.requests();
  CHECK(reqs.size() == 4);
  for (const auto& r : reqs) CHECK(r["n"] == 1);
}

TEST_CASE("thinking step over http") {
  StubServer server([](const json& body, const httplib::Request&, httplib::Response& res) {
    if (body["max_tokens"] == 2048) {
      std::vector<double> lps(2048, -0.5);
      res.set_content(json{{"choices", {choice(0, " add numbers", lps, "length")}}}.dump(), "application/json");
    } else {
      res.set_content(json{{"choices", {choice(0, " Two plus two is four. Then", {-0.1, -0.1, -0.1})}}}.dump(),
                      "application/json");
    }
  });
  HttpBackend backend(descriptor_for(server));
  auto session = backend.open({"q", 0, 0});
  const auto step = session->generate_thinking_step(first_step());
  CHECK(step.text == " Two plus two is four.");
  CHECK(step.thinking_tokens == 2048);
  CHECK(step.thinking_truncated);
  CHECK(step.backbone_tokens == 2051);
  CHECK(session->billed_tokens() == 2051);

  const auto reqs = server.requests();
  REQUIRE(reqs.size() == 2);
  const auto body = prompt_body(first_step());
  CHECK(reqs[0]["prompt"] == body + "<think>\nOkay, so I need to");
  CHECK(reqs[0]["stop"] == json::array({"</think>"}));
  CHECK(reqs[1]["prompt"] == body + "<think>\nOkay, so I need to add numbers\n</think>\n\nStep 1:");

  auto d = descriptor_for(server);
  d.thinking_capable = false;
  HttpBackend plain(d);
  CHECK_ERROR(plain.open({"q", 0, 0})->generate_thinking_step(first_step()), ErrorCode::ThinkingUnsupported);
}

TEST_CASE("request construction is deterministic") {
  BackendDescriptor d;
  d.kind = BackendDescriptor::Kind::Http;
  d.endpoint_url = "http://localhost/v1/completions";
  auto ctx = first_step();
  ctx.prior_steps = {};
  const auto a = build_completion_request(d, ctx, build_prompt(ctx), 512, {"\nStep "}, 2).dump();
  const auto b = build_completion_request(d, ctx, build_prompt(ctx), 512, {"\nStep "}, 2).dump();
  CHECK(a == b);
  CHECK(json::parse(a).contains("model") == false);
}

TEST_CASE("bearer token and url parsing") {
  StubServer server([](const json&, const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"choices", {choice(0, "x.", {-0.1})}}}.dump(), "application/json");
  });
  ::setenv("MUR_TEST_TOKEN", "sekret", 1);
  auto d = descriptor_for(server);
  d.api_key_env = "MUR_TEST_TOKEN";
  HttpBackend backend(d);
  backend.open({"q", 0, 0})->generate_step(first_step());
  CHECK(server.auth_headers().at(0) == "Bearer sekret");
  ::unsetenv("MUR_TEST_TOKEN");

  CHECK(parse_http_url("http://h:8000", "/v1/completions").path == "/v1/completions");
  CHECK(parse_http_url("https://h/x/y", "/d").base == "https://h");
  CHECK_ERROR(parse_http_url("ftp://h", "/d"), ErrorCode::ConfigError);
}

TEST_CASE("http scorer and critic contracts") {
  StubServer server([](const json& body, const httplib::Request& req, httplib::Response& res) {
    if (req.path == "/score") {
      const double s = body["candidate_step"] == "good" ? 0.9 : 0.1;
      res.set_content(json{{"score", s}, {"tokens_used", 40}}.dump(), "application/json");
    } else if (req.path == "/critic") {
      res.set_content(json{{"feedback_text", "looks off"}, {"tokens_used", 25}}.dump(), "application/json");
    } else {
      res.set_content(R"({"nothing":1})", "application/json");
    }
  });
  auto client = [&](const std::string& path) {
    return std::make_unique<JsonHttpClient>(server.url(path), "/", std::chrono::milliseconds(2000), 0,
                                            std::chrono::milliseconds(1), "");
  };
  HttpScorer scorer(client("/score"));
  const auto r = scorer.score({"q", {"s1"}, "good"});
  CHECK(r.score == 0.9);
  CHECK(r.tokens_used == 40);
  const auto sent = server.requests().back();
  CHECK(sent == json{{"question", "q"}, {"prior_steps", {"s1"}}, {"candidate_step", "good"}});

  HttpCritic critic(client("/critic"));
  CHECK(critic.critique({"q", {}, "x"}).feedback_text == "looks off");

  HttpScorer broken(client("/other"));
  CHECK_ERROR(broken.score({"q", {}, "x"}), ErrorCode::ScorerFailure);
  HttpCritic broken_critic(client("/other"));
  CHECK_ERROR(broken_critic.critique({"q", {}, "x"}), ErrorCode::CriticFailure);
}
