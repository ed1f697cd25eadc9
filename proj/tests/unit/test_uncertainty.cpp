#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "mur/rng.hpp"
#include "mur/uncertainty.hpp"
#include "test_support.hpp"

using namespace mur;

namespace {

std::vector<TokenLogProb> tokens(std::initializer_list<double> lps) {
  std::vector<TokenLogProb> out;
  for (double lp : lps) out.push_back(TokenLogProb{"t", lp});
  return out;
}

}  // namespace

TEST_CASE("step_uncertainty is mean negative logprob") {
  CHECK(step_uncertainty(tokens({0.0, 0.0, 0.0})).value() == 0.0);
  CHECK(step_uncertainty(tokens({-1.0})).value() == 1.0);
  CHECK(step_uncertainty(tokens({-0.693147, -0.693147})).value() ==
        doctest::Approx(0.693147).epsilon(1e-9));
}

TEST_CASE("step_uncertainty rejects bad input") {
  CHECK_ERROR(step_uncertainty({}), ErrorCode::EmptyStep);
  CHECK_ERROR(step_uncertainty(tokens({-0.1, std::nan("")})), ErrorCode::InvalidLogProb);
  CHECK_ERROR(step_uncertainty(tokens({0.2})), ErrorCode::InvalidLogProb);
  CHECK_ERROR(step_uncertainty(tokens({-std::numeric_limits<double>::infinity()})),
              ErrorCode::InvalidLogProb);
  CHECK_ERROR(TokenLogProb::make("x", 0.5), ErrorCode::InvalidLogProb);
}

TEST_CASE("token_level_confidence is exp of mean logprob") {
  CHECK(token_level_confidence(tokens({0.0, 0.0})) == 1.0);
  CHECK(token_level_confidence(tokens({-0.693147})) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(token_level_confidence(tokens({-1, -1, -1})) == doctest::Approx(0.367879).epsilon(1e-6));
  CHECK_ERROR(token_level_confidence({}), ErrorCode::EmptyStep);
}

TEST_CASE("momentum_update follows the convex recursion") {
  MomentumState s(0.9);
  CHECK(s.value() == 0.0);
  s = momentum_update(s, StepUncertainty(1.0));
  CHECK(s.value() == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(s.step_index() == 1);
  s = momentum_update(s, StepUncertainty(1.0));
  CHECK(s.value() == doctest::Approx(0.19).epsilon(1e-15));
  CHECK(s.step_index() == 2);

  const MomentumState fixed(0.7, 0.42, 5);
  CHECK(momentum_update(fixed, StepUncertainty(0.42)).value() == doctest::Approx(0.42).epsilon(1e-15));
}

TEST_CASE("momentum state validation") {
  CHECK_ERROR(MomentumState(0.0), ErrorCode::InvalidAlpha);
  CHECK_ERROR(MomentumState(1.0), ErrorCode::InvalidAlpha);
  CHECK_ERROR(MomentumState(0.5, 0.3, 0), ErrorCode::Precondition);
  CHECK_ERROR(StepUncertainty(-0.1), ErrorCode::Precondition);
}

TEST_CASE("momentum_closed_form") {
  const std::vector<double> one{1.0};
  CHECK(momentum_closed_form(one, 0.9) == doctest::Approx(0.1).epsilon(1e-15));
  const std::vector<double> two{1.0, 1.0};
  CHECK(momentum_closed_form(two, 0.9) == doctest::Approx(0.19).epsilon(1e-15));

  // geometric sum: t copies of c give c(1 - a^t)
  for (int t : {1, 3, 17, 60}) {
    const std::vector<double> constant(t, 2.5);
    CHECK(momentum_closed_form(constant, 0.8) ==
          doctest::Approx(2.5 * (1.0 - std::pow(0.8, t))).epsilon(1e-13));
  }
  CHECK_ERROR(momentum_closed_form(one, 1.2), ErrorCode::InvalidAlpha);
  CHECK_ERROR(momentum_closed_form(std::vector<double>{}, 0.5), ErrorCode::Precondition);
}

TEST_CASE("running_mean_update") {
  auto s = running_mean_update({}, StepUncertainty(2.0));
  CHECK(s.mean == 2.0);
  CHECK(s.count == 1);
  s = running_mean_update({1.0, 1}, StepUncertainty(3.0));
  CHECK(s.mean == 2.0);
  CHECK(s.count == 2);
  s = running_mean_update({0.7, 9}, StepUncertainty(0.7));
  CHECK(s.mean == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(s.count == 10);
}

TEST_CASE("property: recursion equals closed form and stays bounded") {
  Engine engine(20240607);
  for (int trial = 0; trial < 500; ++trial) {
    const double alpha = 0.001 + 0.998 * uniform01(engine);
    const auto length = 1 + engine() % 100;
    std::vector<double> ms(length);
    for (auto& m : ms) m = 20.0 * uniform01(engine);

    MomentumState state(alpha);
    double max_m = 0.0;
    for (std::size_t t = 0; t < ms.size(); ++t) {
      state = momentum_update(state, StepUncertainty(ms[t]));
      max_m = std::max(max_m, ms[t]);
      const double cap = (1.0 - std::pow(alpha, static_cast<double>(t + 1))) * max_m;
      REQUIRE(state.value() >= 0.0);
      REQUIRE(state.value() <= cap * (1.0 + 1e-12));
      REQUIRE(cap <= max_m);
    }
    const double closed = momentum_closed_form(ms, alpha);
    const double scale = std::max({std::abs(closed), std::abs(state.value()), 1e-300});
    REQUIRE(std::abs(closed - state.value()) / scale <= 1e-12);
  }
}

TEST_CASE("property: closed form is order sensitive, running mean is not") {
  Engine engine(99);
  for (int trial = 0; trial < 100; ++trial) {
    const double alpha = 0.05 + 0.9 * uniform01(engine);
    std::vector<double> ms(2 + engine() % 20);
    for (auto& m : ms) m = 5.0 * uniform01(engine);
    std::vector<double> reversed(ms.rbegin(), ms.rend());

    RunningMeanState a, b;
    for (double m : ms) a = running_mean_update(a, StepUncertainty(m));
    for (double m : reversed) b = running_mean_update(b, StepUncertainty(m));
    CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-12));
    // a non-palindromic random sequence reweights under reversal
    CHECK(std::abs(momentum_closed_form(ms, alpha) - momentum_closed_form(reversed, alpha)) > 1e-9);
  }
}

TEST_CASE("momentum_trace matches step-by-step updates") {
  const std::vector<double> ms{1.0, 0.5, 0.25};
  const auto trace = momentum_trace(ms, 0.5);
  REQUIRE(trace.size() == 3);
  CHECK(trace[0] == doctest::Approx(0.5));
  CHECK(trace[1] == doctest::Approx(0.5));
  CHECK(trace[2] == doctest::Approx(0.375));
}
