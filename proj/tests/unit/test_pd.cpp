#include "sca/errors.hpp"
#include "sca/pd_autopilot.hpp"

#include <doctest.h>

#include <cmath>

using namespace sca;
using namespace sca::pd;

TEST_CASE("pd synthesis places the closed loop") {
  const dynamics::TransferFunction plant{{1.0}, {1.0, 0.2, 0.0}, 0.0};
  const auto g = synthesize_pd(plant, 0.7, 2.0);
  CHECK(g.K_p == doctest::Approx(-4.0));
  CHECK(g.K_r == doctest::Approx(0.2 - 2.8));
  for (const auto& r : closed_loop_roots(plant, g)) {
    CHECK(std::abs(r) == doctest::Approx(2.0));
    CHECK(-r.real() / std::abs(r) == doctest::Approx(0.7));
  }
  CHECK_NOTHROW(require_stabilizing(plant, g));
}

TEST_CASE("pd gains scale with the plant gain") {
  const dynamics::TransferFunction plant{{4.0}, {1.0, 1.0, 0.0}, 0.0};
  const auto g = synthesize_pd(plant, 0.5, 3.0);
  CHECK(g.K_p == doctest::Approx(-9.0 / 4.0));
  CHECK(g.K_r == doctest::Approx((1.0 - 3.0) / 4.0));
}

TEST_CASE("pd control law") {
  const PdGains g{-4.0, -2.6};
  CHECK(pd_control(g, 1.0, 3.0, 0.5) == doctest::Approx(-4.0 * -2.0 - 2.6 * 0.5));
}

TEST_CASE("closed loop has unity dc gain") {
  const dynamics::TransferFunction plant{{1.0}, {1.0, 0.2, 0.0}, 0.0};
  const auto g = synthesize_pd(plant, 0.7, 2.0);
  CHECK(std::abs(closed_loop_response(plant, g, 1e-9) - 1.0) < 1e-6);
  CHECK(std::abs(closed_loop_response(plant, g, 20.0)) < 0.05);
}

TEST_CASE("other plant structures are rejected") {
  CHECK_THROWS_AS(synthesize_pd({{1.0}, {1.0, 1.0}, 0.0}, 0.7, 2.0), SynthesisError);
  CHECK_THROWS_AS(synthesize_pd({{1.0}, {1.0, 1.0, 2.0}, 0.0}, 0.7, 2.0), SynthesisError);
  const dynamics::TransferFunction plant{{1.0}, {1.0, 0.2, 0.0}, 0.0};
  CHECK_THROWS_AS(require_stabilizing(plant, {1.0, 0.0}), SynthesisError);
}
