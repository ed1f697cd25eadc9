#include <doctest.h>

#include <sstream>

#include "mur/backend.hpp"
#include "mur/mock_backend.hpp"
#include "mur/uncertainty.hpp"
#include "test_support.hpp"

using namespace mur;

namespace {

std::shared_ptr<const Script> script_of(const std::string& text) {
  std::istringstream in(text);
  return std::make_shared<const Script>(Script::parse(in));
}

GenerationContext context_at(std::uint32_t step, std::vector<std::string> prior = {}) {
  GenerationContext ctx;
  ctx.question = "What is 6 * 7?";
  ctx.prior_steps = std::move(prior);
  ctx.step_index = step;
  return ctx;
}

const char* kBasicScript = R"(
{"kind":"step","context_key":"q1/1","text":" Multiply six by seven.","logprobs":[-0.1,-0.2],"tokens":[" Multiply"," six by seven."]}
{"kind":"step","context_key":"q1/2","text":" So the answer is 42.","logprobs":[-0.05,-0.01,-0.3]}
{"kind":"candidates","context_key":"q1/2","texts":["a","b","c"],"logprobs":[[-0.1],[-0.2],[-0.3]]}
{"kind":"thinking","context_key":"q1/2","text":"First part. Second part. Trailing bit","logprobs":[-0.1,-0.1,-0.1],"thinking_tokens":100}
)";

}  // namespace

TEST_CASE("mock step round-trips text and logprobs") {
  MockBackend backend(script_of(kBasicScript));
  auto session = backend.open({"q1", 0, 1});
  const auto step = session->generate_step(context_at(1));
  CHECK(step.text == " Multiply six by seven.");
  REQUIRE(step.tokens.size() == 2);
  CHECK(step.tokens[0].logprob == -0.1);
  CHECK(step.tokens[1].logprob == -0.2);
  CHECK(step.tokens[1].token_text == " six by seven.");
  CHECK(step.finish_reason == FinishReason::StepBoundary);
  CHECK(step.backbone_tokens == 2);
  CHECK(step_uncertainty(step.tokens).value() == doctest::Approx(0.15).epsilon(1e-15));
}

TEST_CASE("answer phrase sets the finish reason") {
  MockBackend backend(script_of(kBasicScript));
  auto session = backend.open({"q1", 0, 1});
  session->generate_step(context_at(1));
  const auto step = session->generate_step(context_at(2, {" Multiply six by seven."}));
  CHECK(step.finish_reason == FinishReason::AnswerPhrase);
  CHECK(contains_answer_phrase(step.text));
  CHECK(contains_answer_phrase("THE ANSWER IS 4"));
  CHECK_FALSE(contains_answer_phrase("the answer was 4"));
}

TEST_CASE("candidates come back in scripted order") {
  MockBackend backend(script_of(kBasicScript));
  auto session = backend.open({"q1", 0, 1});
  const auto ctx = context_at(2, {"x"});
  const auto three = session->generate_candidates(ctx, 3);
  REQUIRE(three.size() == 3);
  CHECK(three[0].text == "a");
  CHECK(three[1].text == "b");
  CHECK(three[2].text == "c");
  CHECK(three[2].tokens[0].logprob == -0.3);

  auto fresh = backend.open({"q1", 0, 1});
  const auto one = fresh->generate_candidates(ctx, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].text == "a");
  CHECK_ERROR(fresh->generate_candidates(ctx, 0), ErrorCode::Precondition);
}

TEST_CASE("asking for more candidates than scripted exhausts the script") {
  MockBackend backend(script_of(kBasicScript));
  auto session = backend.open({"q1", 0, 1});
  CHECK_ERROR(session->generate_candidates(context_at(2, {"x"}), 4), ErrorCode::ScriptExhausted);
}

TEST_CASE("missing and consumed records raise ScriptExhausted") {
  MockBackend backend(script_of(kBasicScript));
  auto session = backend.open({"q9", 0, 1});
  CHECK_ERROR(session->generate_step(context_at(1)), ErrorCode::ScriptExhausted);

  auto again = backend.open({"q1", 0, 1});
  again->generate_step(context_at(1));
  CHECK_ERROR(again->generate_step(context_at(1)), ErrorCode::ScriptExhausted);

  // each session owns its cursor
  auto other = backend.open({"q1", 1, 2});
  CHECK_NOTHROW(other->generate_step(context_at(1)));
}

TEST_CASE("thinking step accounting") {
  MockBackend backend(script_of(kBasicScript));
  auto session = backend.open({"q1", 0, 1});
  REQUIRE(session->supports_thinking());
  const auto step = session->generate_thinking_step(context_at(2, {"x"}));
  CHECK(step.thinking_tokens == 100);
  CHECK(step.backbone_tokens == 103);
  CHECK_FALSE(step.thinking_truncated);
  CHECK(step.text == "First part. Second part.");
  CHECK(step.tokens.size() == 3);  // accounting keeps the dropped fragment
}

TEST_CASE("thinking segment is capped at 2048 tokens") {
  MockBackend backend(script_of(
      R"({"kind":"thinking","context_key":"q1/1","text":"Done.","logprobs":[-0.1,-0.2],"thinking_tokens":4096})"));
  auto session = backend.open({"q1", 0, 1});
  const auto step = session->generate_thinking_step(context_at(1));
  CHECK(step.thinking_tokens == 2048);
  CHECK(step.thinking_truncated);
  CHECK(step.backbone_tokens == 2050);
}

TEST_CASE("thinking without scripted thinking records is unsupported") {
  MockBackend backend(script_of(R"({"kind":"step","context_key":"q1/1","text":"a","logprobs":[-0.1]})"));
  auto session = backend.open({"q1", 0, 1});
  CHECK_FALSE(session->supports_thinking());
  CHECK_ERROR(session->generate_thinking_step(context_at(1)), ErrorCode::ThinkingUnsupported);
}

TEST_CASE("completed sentences") {
  CHECK(completed_sentences("One. Two! Three? Four") == "One. Two! Three?");
  CHECK(completed_sentences("x = 3.5 so far.") == "x = 3.5 so far.");
  CHECK(completed_sentences("x = 3.5 and") == "");
  CHECK(completed_sentences("") == "");
  CHECK(completed_sentences("End.\nNext") == "End.");
}

TEST_CASE("sample-specific and after-conditioned records take precedence") {
  MockBackend backend(script_of(R"(
{"kind":"step","context_key":"q1/2","text":"generic","logprobs":[-0.1]}
{"kind":"step","context_key":"q1/2","text":"after-fix","logprobs":[-0.1],"after":"fixed"}
{"kind":"step","context_key":"q1/2","text":"sample-3","logprobs":[-0.1],"sample":3}
)"));
  CHECK(backend.open({"q1", 0, 0})->generate_step(context_at(2, {"plain"})).text == "generic");
  CHECK(backend.open({"q1", 0, 0})->generate_step(context_at(2, {"fixed it"})).text == "after-fix");
  CHECK(backend.open({"q1", 3, 0})->generate_step(context_at(2, {"fixed it"})).text == "sample-3");
}

TEST_CASE("billed tokens equal returned backbone tokens") {
  MockBackend backend(script_of(kBasicScript));
  auto session = backend.open({"q1", 0, 1});
  std::uint64_t sum = 0;
  sum += session->generate_step(context_at(1)).backbone_tokens;
  for (const auto& c : session->generate_candidates(context_at(2, {"x"}), 3)) sum += c.backbone_tokens;
  sum += session->generate_thinking_step(context_at(2, {"x"})).backbone_tokens;
  CHECK(session->billed_tokens() == sum);
}

TEST_CASE("script schema errors carry the line number") {
  std::istringstream bad_json("{\"kind\":\"step\"\n");
  CHECK_ERROR(Script::parse(bad_json), ErrorCode::SchemaError);
  std::istringstream bad_lp(R"({"kind":"step","context_key":"a/1","text":"t","logprobs":[0.5]})");
  CHECK_ERROR(Script::parse(bad_lp), ErrorCode::SchemaError);
  std::istringstream empty_lp(R"({"kind":"step","context_key":"a/1","text":"t","logprobs":[]})");
  CHECK_ERROR(Script::parse(empty_lp), ErrorCode::SchemaError);
  std::istringstream two_lines("\n{\"kind\":\"oops\"}\n");
  try {
    Script::parse(two_lines, "s.jsonl");
    FAIL("expected a schema error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("s.jsonl:2") != std::string::npos);
  }
  CHECK_ERROR(Script::load("/nonexistent/script.jsonl"), ErrorCode::IoError);
}

TEST_CASE("context validation") {
  auto ctx = context_at(2);
  CHECK_ERROR(ctx.validate(), ErrorCode::Precondition);
  ctx = context_at(1);
  ctx.temperature = -0.1;
  CHECK_ERROR(ctx.validate(), ErrorCode::Precondition);
  CHECK(GenerationContext{}.temperature == 0.6);
}

TEST_CASE("prompt assembly") {
  auto ctx = context_at(3, {"First.", "Second."});
  ctx.instruction_suffix = "Begin with \"Step {stepidx}:\" ({stepidx})";
  const auto prompt = build_prompt(ctx);
  CHECK(prompt ==
        "What is 6 * 7?\nBegin with \"Step 3:\" (3)\n\nStep 1: First.\nStep 2: Second.\nStep 3:");
  ctx.feedback = Feedback{"Draft text.", "Check the sign."};
  CHECK(prompt_body(ctx).find("[Feedback on Step 3]\nDraft: Draft text.\nCritique: Check the sign.\n[End of feedback]\n") !=
        std::string::npos);
  CHECK(build_prompt(ctx) == build_prompt(ctx));
  CHECK(std::string(kDefaultInstruction).find("{stepidx}") != std::string::npos);
}

TEST_CASE("backend descriptor validation") {
  BackendDescriptor http;
  http.kind = BackendDescriptor::Kind::Http;
  CHECK_ERROR(http.validate(), ErrorCode::ConfigError);
  http.endpoint_url = "http://127.0.0.1:1/v1/completions";
  CHECK_NOTHROW(http.validate());
  BackendDescriptor mock;
  CHECK_ERROR(mock.validate(), ErrorCode::ConfigError);
  CHECK_ERROR(make_backend(mock), ErrorCode::ConfigError);
}

TEST_CASE("finish reason names round-trip") {
  for (auto r : {FinishReason::StepBoundary, FinishReason::AnswerPhrase, FinishReason::MaxTokens,
                 FinishReason::EndOfSequence}) {
    CHECK(finish_reason_from_string(to_string(r)) == r);
  }
  CHECK_ERROR(finish_reason_from_string("nope"), ErrorCode::SchemaError);
}
