#include "sca/errors.hpp"
#include "sca/scenario.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>

using namespace sca;
using namespace sca::scenario;

TEST_CASE("command channel value and rate") {
  CommandChannel ch;
  ch.offset = 1.0;
  ch.sines = {{2.0, 0.5, 0.3}};
  ch.points = {{0.0, 0.0}, {10.0, 5.0}, {20.0, 5.0}};
  CHECK(ch.value(4.0) == doctest::Approx(1.0 + 0.5 * std::sin(8.3) + 2.0));
  CHECK(ch.rate(4.0) == doctest::Approx(1.0 * std::cos(8.3) + 0.5));
  CHECK(ch.value(30.0) == doctest::Approx(1.0 + 0.5 * std::sin(60.3) + 5.0));
  CHECK(ch.rate(15.0) == doctest::Approx(1.0 * std::cos(30.3)));
}

TEST_CASE("fnv-1a reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("every named scenario builds and validates") {
  for (const auto& name : scenario_names()) {
    INFO(name);
    const auto cfg = named_scenario(name);
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.scenario == name);
  }
  CHECK(named_scenario("sca1-harsh-late").label == "late");
  CHECK(named_scenario("sca2-perf-optimal").autopilot.kind == AutopilotSpecKind::optimal);
  CHECK_THROWS_AS(named_scenario("sca3"), ConfigError);
}

TEST_CASE("config json round-trip keeps the hash") {
  for (const auto& name : {"sca1-harsh", "sca1-mild-late", "sca2-perf", "sca2-train-high"}) {
    INFO(name);
    const auto cfg = named_scenario(name);
    const auto back = config_from_json(to_json(cfg));
    CHECK(back == cfg);
    CHECK(config_hash(back) == config_hash(cfg));
  }
  auto a = named_scenario("sca2-perf");
  auto b = a;
  b.seed = 5;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("config file round-trip") {
  const auto path = (std::filesystem::temp_directory_path() / "sca_config_roundtrip.json").string();
  const auto cfg = named_scenario("sca1-mild");
  save_config(path, cfg);
  CHECK(load_config(path) == cfg);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_config(path), ConfigError);
}

TEST_CASE("validation rejects inconsistent scenarios") {
  auto cfg = named_scenario("sca2-perf");
  cfg.dt = 0.03;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = named_scenario("sca2-perf");
  cfg.autopilot.kind = AutopilotSpecKind::optimal;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // supervisory pilot needs mu_mod

  cfg = named_scenario("sca1-harsh");
  cfg.alert.policy = AlertPolicy::late;
  cfg.pilot.kind = PilotKind::none;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = named_scenario("sca1-harsh");
  cfg.anomalies.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  CHECK_THROWS_AS(config_from_json({{"family", "sca1"}}), ConfigError);
}

TEST_CASE("sca1 alert timelines") {
  const auto late = build_sca1(Sca1Kind::harsh, AlertPolicy::late);
  const auto exact = build_sca1(Sca1Kind::harsh, AlertPolicy::exact);
  const auto none = build_sca1(Sca1Kind::harsh, AlertPolicy::none);
  CHECK(late.alert.delta_t > exact.alert.delta_t);
  CHECK(none.label == "auto");
  CHECK(none.pilot.kind == PilotKind::none);
  CHECK(late.pilot.kind == PilotKind::crossover);
  CHECK(late.anomalies.front().t_a == 50.0);
  CHECK(build_sca1(Sca1Kind::mild, AlertPolicy::exact).anomalies.front().t_a == 64.0);
}

TEST_CASE("sca2 performance schedule") {
  const auto cfg = build_sca2_performance();
  REQUIRE(cfg.anomalies.size() == 2);
  CHECK(cfg.anomalies[0].t_a == 32.0);
  CHECK(cfg.anomalies[0].severity == "Middle");
  CHECK(cfg.anomalies[1].t_a == 68.0);
  CHECK(cfg.anomalies[1].severity == "High");
  CHECK(cfg.pilot.kind == PilotKind::sap);
  CHECK(cfg.autopilot.kind == AutopilotSpecKind::mu_mod);
}

TEST_CASE("training anomaly times are drawn from the window") {
  const auto a = build_sca2_training("Middle", true, 1);
  const auto b = build_sca2_training("Middle", true, 1);
  const auto c = build_sca2_training("Middle", true, 2);
  CHECK(a.anomalies[0].t_a == b.anomalies[0].t_a);
  CHECK(a.anomalies[0].t_a >= 20.0);
  CHECK(a.anomalies[0].t_a <= 60.0);
  CHECK(a.anomalies[0].t_a != c.anomalies[0].t_a);
  CHECK(build_sca2_training("Low", false, 0).scenario == "sca2-train-low");
}

TEST_CASE("variants set pilot and autopilot consistently") {
  auto cfg = build_sca2_performance();
  set_sca2_variant(cfg, "sup");
  CHECK(cfg.pilot.kind == PilotKind::sup);
  CHECK(cfg.autopilot.mu_from_pilot);
  set_sca2_variant(cfg, "adaptive");
  CHECK(cfg.pilot.kind == PilotKind::none);
  CHECK_FALSE(cfg.autopilot.mu_from_pilot);
  CHECK(cfg.label == "adaptive");
  CHECK_THROWS_AS(set_sca2_variant(cfg, "pid"), ConfigError);
  auto sca1 = build_sca1(Sca1Kind::harsh, AlertPolicy::late);
  CHECK_THROWS_AS(set_sca2_variant(sca1, "sap"), ConfigError);
}

TEST_CASE("run options") {
  auto cfg = named_scenario("sca1-harsh");
  RunOptions opts;
  opts.alert = "exact";
  opts.seed = 42;
  apply_run_options(cfg, opts);
  CHECK(cfg.label == "exact");
  CHECK(cfg.seed == 42);
  CHECK(cfg.name == "sca1-harsh-exact");

  RunOptions none;
  none.pilot = "none";
  apply_run_options(cfg, none);
  CHECK(cfg.label == "auto");

  auto s2 = named_scenario("sca2-perf");
  RunOptions bad;
  bad.alert = "late";
  CHECK_THROWS_AS(apply_run_options(s2, bad), ConfigError);
  RunOptions mixed;
  mixed.pilot = "sap";
  mixed.autopilot = "optimal";
  CHECK_THROWS_AS(apply_run_options(s2, mixed), ConfigError);
  RunOptions baseline;
  baseline.autopilot = "mu_mod";
  apply_run_options(s2, baseline);
  CHECK(s2.label == "mu_mod");
  CHECK(s2.autopilot.mu == 1.0);

  auto s1 = named_scenario("sca1-mild");
  RunOptions sap;
  sap.pilot = "sap";
  CHECK_THROWS_AS(apply_run_options(s1, sap), ConfigError);
}

TEST_CASE("mu table covers every severity") {
  const auto table = default_mu_table();
  for (const auto& label : {"Low", "Middle", "High"}) {
    REQUIRE(table.count(label) == 1);
    CHECK(table.at(label) >= 1);
    CHECK(table.at(label) <= 20);
  }
}
