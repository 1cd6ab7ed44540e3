#include "sca/adaptive.hpp"
#include "sca/errors.hpp"
#include "sca/scenario.hpp"

#include "property_suites.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace sca;
using namespace sca::adaptive;

TEST_CASE("lyapunov solver on random hurwitz matrices") {
  const auto r = checks::lyapunov_solver(100, 11);
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("lyapunov solver rejects unstable matrices") {
  CHECK_THROWS_AS(solve_lyapunov(Mat::Identity(2, 2), Mat::Identity(2, 2)), SynthesisError);
  CHECK_THROWS_AS(solve_lyapunov(-Mat::Identity(2, 2), Mat::Identity(3, 3)), ContractViolation);
}

TEST_CASE("riccati solution satisfies the algebraic equation") {
  Mat A(3, 3), B(3, 1);
  A << 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, -2.0, 0.5;
  B << 0.0, 0.0, 1.0;
  const Mat Q = Mat::Identity(3, 3);
  const Mat R = 2.0 * Mat::Identity(1, 1);
  const Mat P = solve_care(A, B, Q, R);
  const Mat res = A.transpose() * P + P * A - P * B * R.inverse() * B.transpose() * P + Q;
  CHECK(res.norm() < 1e-9);
  CHECK(Eigen::LLT<Mat>(P).info() == Eigen::Success);
  const Mat K_x = lqr_gain(A, B, Q, R);
  CHECK(is_hurwitz(A + B * K_x.transpose()));
}

TEST_CASE("riccati rejects an unstabilizable pair") {
  Mat A = Mat::Identity(2, 2);
  Mat B(2, 1);
  B << 1.0, 0.0;
  CHECK_THROWS_AS(lqr_gain(A, B, Mat::Identity(2, 2), Mat::Identity(1, 1)), SynthesisError);
}

TEST_CASE("matched reference model has unity dc gain") {
  const auto r = checks::matching_dc_gain(30, 5);
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("severity estimate outside (0, 1] is rejected by matching") {
  Mat A(2, 2), B(2, 1), C(1, 2);
  A << 0.0, 1.0, -1.0, -1.0;
  B << 0.0, 1.0;
  C << 1.0, 0.0;
  const Mat K_x = lqr_gain(A, B, Mat::Identity(2, 2), Mat::Identity(1, 1));
  CHECK_THROWS_AS(match_anomaly(A, B, Vec::Constant(1, 0.0), K_x, C), ContractViolation);
  CHECK_THROWS_AS(match_anomaly(A, B, Vec::Constant(1, 1.5), K_x, C), ContractViolation);
  const auto half = match_anomaly(A, B, Vec::Constant(1, 0.5), K_x, C);
  const Vec x_inf = -half.A_m.partialPivLu().solve(half.B_m * Vec::Constant(1, 1.0));
  CHECK((C * x_inf)(0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mu-mod closed forms and monotonicity") {
  const auto r = checks::mu_mod_shaping();
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("mu-mod vector form validates its configuration") {
  MuModConfig cfg{1.0, 0.25, (Vec(2) << 1.0, 4.0).finished()};
  const Vec u_c = mu_mod_limit((Vec(2) << 2.0, -1.0).finished(), cfg);
  CHECK(u_c(0) == doctest::Approx(0.5 * (2.0 + 0.75)));
  CHECK(u_c(1) == -1.0);
  cfg.delta = 1.0;
  CHECK_THROWS_AS(mu_mod_limit(Vec::Zero(2), cfg), ContractViolation);
}

TEST_CASE("adaptive law single step against the outer-product oracle") {
  const auto r = checks::adaptive_law_step(40, 3);
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("ideal-case lyapunov function does not increase") {
  const auto tr = checks::ideal_lyapunov_descent(60.0, 0.001);
  INFO("V0 " << tr.v0 << " V_end " << tr.v_end << " max increase " << tr.max_increase);
  CHECK_FALSE(tr.saturated);
  CHECK(tr.max_increase <= 1e-6);
  CHECK(tr.v_end < 0.5 * tr.v0);
}

TEST_CASE("pilot directives range") {
  PilotDirectives d;
  d.mu = 0;
  CHECK_THROWS_AS(d.validate(), ContractViolation);
  d.mu = 20;
  d.lambda_hat = Vec::Constant(2, 0.2);
  CHECK_NOTHROW(d.validate());
  d.lambda_hat = Vec::Constant(2, 1.2);
  CHECK_THROWS_AS(d.validate(), ContractViolation);
}

TEST_CASE("autopilot on the longitudinal plant") {
  const auto cfg = scenario::build_sca2_performance();
  auto plant = dynamics::StateSpacePlant::linear(cfg.plant.A, cfg.plant.B, cfg.plant.x0);
  AdaptiveConfig ac;
  ac.kind = AutopilotKind::mu_mod;
  ac.mu = 1.0;
  ac.gamma = cfg.autopilot.gamma;
  ac.Q_lqr = cfg.autopilot.Q_lqr;
  ac.C = cfg.plant.C;
  AdaptiveAutopilot ap(plant, cfg.actuator, ac);
  CHECK(is_hurwitz(ap.reference().A_m));

  const Vec x = Vec::Zero(5);
  const Vec r0 = (Vec(2) << 0.5, 0.2).finished();
  const auto out = ap.control(x, r0);
  CHECK((out.u.cwiseAbs().array() <= cfg.actuator.u_max.array()).all());
  CHECK((out.du_ad - (out.u - out.u_ad)).norm() == 0.0);

  const Vec xm_before = ap.reference().x_m;
  ap.rematch(Vec::Constant(2, 0.2));
  CHECK(ap.reference().x_m == xm_before);
  CHECK(ap.mu() == 1.0);
  ap.set_mu(5.0);
  CHECK(ap.mu() == 5.0);
  CHECK_THROWS_AS(ap.set_mu(-1.0), ContractViolation);
}

TEST_CASE("optimal autopilot keeps fixed gains") {
  const auto cfg = scenario::build_sca2_performance();
  auto plant = dynamics::StateSpacePlant::linear(cfg.plant.A, cfg.plant.B, cfg.plant.x0);
  AdaptiveConfig ac;
  ac.kind = AutopilotKind::optimal;
  ac.Q_lqr = cfg.autopilot.Q_lqr;
  ac.C = cfg.plant.C;
  AdaptiveAutopilot ap(plant, cfg.actuator, ac);
  const Mat K_x = ap.gains().K_x;
  const Vec x = Vec::Constant(5, 0.1);
  const Vec r0 = Vec::Constant(2, 1.0);
  ap.advance(x, r0, ap.control(x, r0), 0.01);
  CHECK(ap.gains().K_x == K_x);
}

TEST_CASE("autopilot kind names round-trip") {
  for (auto k : {AutopilotKind::adaptive, AutopilotKind::mu_mod, AutopilotKind::optimal})
    CHECK(autopilot_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(autopilot_kind_from_string("pid"), ConfigError);
}
