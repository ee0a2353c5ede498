#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "neo/common.hpp"
#include "neo/losses.hpp"
#include "neo/rng.hpp"

using namespace neo;

namespace {

constexpr double kLn2 = std::numbers::ln2;

// Direct form, long double; fine away from saturation.
double naive_nls(long double z) { return static_cast<double>(-std::log(1.0L / (1.0L + std::exp(-z)))); }

PairLogProbs random_pair(Rng& rng, double scale = 20.0) {
  return {-scale * rng.uniform(), -scale * rng.uniform(), -scale * rng.uniform(), -scale * rng.uniform()};
}

constexpr LossVariant kAll[] = {LossVariant::kDpoStandard, LossVariant::kDpoAsPrinted,
                                LossVariant::kApoUpStandard, LossVariant::kApoUpAsPrinted};

}  // namespace

TEST_CASE("neutral values at the reference point") {
  const PairLogProbs p{-3.5, -7.25, -3.5, -7.25};
  CHECK(std::abs(dpo_loss(p, 0.2, LossVariant::kDpoStandard) - kLn2) <= 1e-12);
  CHECK(std::abs(apo_up_loss(p, 0.2, LossVariant::kApoUpStandard) - 2 * kLn2) <= 1e-12);
  CHECK(std::abs(preference_loss(p, 0.2, LossVariant::kApoUpStandard).value - 2 * kLn2) <= 1e-12);
  CHECK(std::abs(neg_log_sigmoid(0.0) - kLn2) <= 1e-15);
  // The printed sign does not give the neutral value unless the reference
  // margin happens to be zero.
  CHECK(dpo_loss(p, 0.2, LossVariant::kDpoAsPrinted) != doctest::Approx(kLn2));
}

TEST_CASE("as-printed equals standard with the reference margin negated") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const PairLogProbs p = random_pair(rng);
    const double beta = 0.01 + rng.uniform();
    // Swapping lp0_c and lp0_r negates the reference margin.
    const PairLogProbs flipped{p.lp_c, p.lp_r, p.lp0_r, p.lp0_c};
    REQUIRE(dpo_loss(p, beta, LossVariant::kDpoAsPrinted) ==
            doctest::Approx(dpo_loss(flipped, beta, LossVariant::kDpoStandard)).epsilon(1e-14));
  }
}

TEST_CASE("dpo matches the direct formula") {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const PairLogProbs p = random_pair(rng);
    const long double margin = (static_cast<long double>(p.lp_c) - p.lp_r) - (static_cast<long double>(p.lp0_c) - p.lp0_r);
    CHECK(dpo_loss(p, 0.2, LossVariant::kDpoStandard) == doctest::Approx(naive_nls(0.2L * margin)).epsilon(1e-12));
  }
}

TEST_CASE("apo-up is dpo plus the anchor term") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const PairLogProbs p = random_pair(rng);
    const double beta = 0.05 + rng.uniform();
    const double anchor = naive_nls(static_cast<long double>(beta) * (static_cast<long double>(p.lp_c) - p.lp0_c));
    REQUIRE(std::abs(apo_up_loss(p, beta, LossVariant::kApoUpStandard) -
                     dpo_loss(p, beta, LossVariant::kDpoStandard) - anchor) <= 1e-12);
    REQUIRE(std::abs(apo_up_loss(p, beta, LossVariant::kApoUpAsPrinted) -
                     dpo_loss(p, beta, LossVariant::kDpoAsPrinted) - anchor) <= 1e-12);
  }
  // Anchor alone at lp_c == lp0_c.
  const PairLogProbs at_ref{-2, -4, -2, -1};
  CHECK(std::abs(apo_up_loss(at_ref, 0.2, LossVariant::kApoUpStandard) -
                 dpo_loss(at_ref, 0.2, LossVariant::kDpoStandard) - kLn2) <= 1e-12);
}

TEST_CASE("saturation at large margins") {
  const double beta = 0.2;
  const PairLogProbs p{0.0, -70.0, -1.0, -1.0};  // beta * margin = 14
  CHECK(dpo_loss(p, beta, LossVariant::kDpoStandard) < 1e-6);
  CHECK(dpo_loss(p, beta, LossVariant::kDpoStandard) > 0.0);
}

TEST_CASE("stable for |z| up to 1e4") {
  for (double z : {-1e4, -700.0, -50.0, -1.0, 0.0, 1.0, 50.0, 700.0, 1e4}) {
    const double v = neg_log_sigmoid(z);
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
    if (z < -40) CHECK(v == doctest::Approx(-z).epsilon(1e-15));
    if (std::abs(z) <= 50) CHECK(v == doctest::Approx(naive_nls(z)).epsilon(1e-12));
  }
  const PairLogProbs far{0.0, -5e4, 0.0, 0.0};
  for (LossVariant v : kAll) {
    CHECK(std::isfinite(preference_loss(far, 0.2, v).value));
    CHECK(std::isfinite(preference_loss({-5e4, 0.0, 0.0, 0.0}, 0.2, v).value));
  }
}

TEST_CASE("positive, and monotone in each log-probability") {
  Rng rng(4);
  for (int i = 0; i < 500; ++i) {
    const PairLogProbs p = random_pair(rng, 10.0);
    for (LossVariant v : kAll) {
      const double base = preference_loss(p, 0.2, v).value;
      REQUIRE(base > 0.0);
      PairLogProbs up_c = p, up_r = p;
      up_c.lp_c += 0.5;
      up_r.lp_r += 0.5;
      REQUIRE(preference_loss(up_c, 0.2, v).value < base);
      REQUIRE(preference_loss(up_r, 0.2, v).value > base);
    }
  }
}

TEST_CASE("anchor term falls as the chosen likelihood rises above the reference") {
  double last = std::numeric_limits<double>::infinity();
  for (double lift = 0.0; lift <= 20.0; lift += 0.5) {
    const PairLogProbs p{-10.0 + lift, -10.0, -10.0, -10.0};
    const double anchor = apo_up_loss(p, 0.2, LossVariant::kApoUpStandard) - dpo_loss(p, 0.2, LossVariant::kDpoStandard);
    CHECK(anchor < last);
    last = anchor;
  }
}

TEST_CASE("derivatives match central differences") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const PairLogProbs p = random_pair(rng);
    const double beta = 0.05 + rng.uniform();
    for (LossVariant v : kAll) {
      const LossValue lv = preference_loss(p, beta, v);
      const double h = 1e-5;
      PairLogProbs a = p, b = p;
      a.lp_c += h;
      b.lp_c -= h;
      const double fd_c = (preference_loss(a, beta, v).value - preference_loss(b, beta, v).value) / (2 * h);
      a = p;
      b = p;
      a.lp_r += h;
      b.lp_r -= h;
      const double fd_r = (preference_loss(a, beta, v).value - preference_loss(b, beta, v).value) / (2 * h);
      REQUIRE(lv.d_lp_c == doctest::Approx(fd_c).epsilon(1e-6).scale(1e-3));
      REQUIRE(lv.d_lp_r == doctest::Approx(fd_r).epsilon(1e-6).scale(1e-3));
    }
  }
}

TEST_CASE("invalid inputs") {
  const PairLogProbs ok{-1, -2, -1, -2};
  CHECK_THROWS_AS(dpo_loss(ok, 0.0, LossVariant::kDpoStandard), Error);
  CHECK_THROWS_AS(dpo_loss(ok, -0.2, LossVariant::kDpoStandard), Error);
  const PairLogProbs bad{-std::numeric_limits<double>::infinity(), -2, -1, -2};
  try {
    apo_up_loss(bad, 0.2, LossVariant::kApoUpStandard);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNumeric);
  }
  CHECK_THROWS_AS(preference_loss({std::nan(""), -2, -1, -2}, 0.2, LossVariant::kDpoStandard), Error);
}

TEST_CASE("variant names round trip") {
  for (LossVariant v : kAll) CHECK(parse_loss_variant(to_string(v)) == v);
  CHECK(to_string(LossVariant::kApoUpStandard) == "apo_up_standard");
  CHECK_THROWS_AS(parse_loss_variant("apo_down"), Error);
}
