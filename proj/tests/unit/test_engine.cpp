#include "sca/engine.hpp"
#include "sca/errors.hpp"
#include "sca/metrics.hpp"

#include <doctest.h>

#include <filesystem>
#include <sstream>

using namespace sca;
using namespace sca::engine;

TEST_CASE("run log ndjson round-trip is exact") {
  auto cfg = scenario::named_scenario("sca2-perf");
  cfg.seed = 3;
  const auto log = run_scenario(cfg);
  std::stringstream ss;
  write_runlog(ss, log);
  const auto back = read_runlog(ss);
  CHECK(back == log);
  CHECK(back.config_hash == scenario::config_hash(cfg));

  const auto path = (std::filesystem::temp_directory_path() / "sca_runlog_roundtrip.ndjson").string();
  save_runlog(path, log);
  CHECK(load_runlog(path) == log);
  std::filesystem::remove(path);
}

TEST_CASE("hash text form") {
  CHECK(parse_hash(format_hash(0x0123456789abcdefULL)) == 0x0123456789abcdefULL);
  CHECK(format_hash(1).size() == 16);
}

TEST_CASE("identical seeds give bit-identical logs") {
  auto cfg = scenario::named_scenario("sca1-harsh");
  cfg.seed = 7;
  const auto a = run_scenario(cfg);
  const auto b = run_scenario(cfg);
  CHECK(a == b);
  cfg.seed = 8;
  const auto c = run_scenario(cfg);
  CHECK_FALSE(a == c);
}

TEST_CASE("replay passes on an untouched log and locates tampering") {
  auto cfg = scenario::named_scenario("sca2-perf");
  cfg.seed = 2;
  auto log = run_scenario(cfg);
  const auto ok = replay(log);
  INFO(ok.message);
  CHECK(ok.pass);

  auto tampered = log;
  tampered.steps[1234].x(0) += 1e-12;
  const auto bad = replay(tampered);
  CHECK_FALSE(bad.pass);
  CHECK(bad.first_divergent_step.value() == 1234);

  auto wrong_config = log;
  wrong_config.config["duration"] = 90.0;
  const auto mismatch = replay(wrong_config);
  CHECK_FALSE(mismatch.pass);
  CHECK(mismatch.hash_mismatch);
}

TEST_CASE("supervisory run records directives and applies mu") {
  auto cfg = scenario::named_scenario("sca2-perf");
  const auto log = run_scenario(cfg);
  const auto directives = log.events_of("directive");
  REQUIRE(directives.size() == 2);
  CHECK(directives[0]->t == doctest::Approx(33.0));
  CHECK(directives[1]->t == doctest::Approx(69.0));
  CHECK(directives[0]->payload.contains("lambda_hat"));
  const auto table = scenario::default_mu_table();
  CHECK(log.steps.back().mu == table.at("High"));
  CHECK(log.steps[100].mu == 1.0);
  CHECK(log.events_of("anomaly").size() == 2);
}

TEST_CASE("trading run: alert, take-over and perception events") {
  auto cfg = scenario::named_scenario("sca1-harsh");
  const auto log = run_scenario(cfg);
  CHECK(log.events_of("calibration").size() == 1);
  const auto trig = log.events_of("perception_trigger");
  REQUIRE(trig.size() == 1);
  CHECK(trig[0]->t > 50.0);
  const auto alerts = log.events_of("alert");
  REQUIRE(alerts.size() == 1);
  CHECK(alerts[0]->t == trig[0]->t);
  const auto take = log.events_of("take_over");
  REQUIRE(take.size() == 1);
  CHECK(take[0]->t == doctest::Approx(alerts[0]->t + 1.0));
  CHECK(log.steps.back().active == "pilot");
  CHECK(log.steps.front().active == "autopilot");
}

TEST_CASE("autopilot-only trading run never alerts") {
  auto cfg = scenario::named_scenario("sca1-mild-none");
  const auto log = run_scenario(cfg);
  CHECK(log.events_of("alert").empty());
  CHECK(log.events_of("take_over").empty());
  CHECK(metrics::compute_report(log).label == "auto");
}

TEST_CASE("perception calibration from the nominal flight") {
  const auto cal = calibrate(scenario::named_scenario("sca1-harsh"));
  CHECK(cal.mu_p > 0.0);
  CHECK(cal.sigma_p > 0.0);
}

TEST_CASE("pd gains follow the scenario") {
  const auto g = pd_gains_for(scenario::named_scenario("sca1-harsh"));
  CHECK(g.K_p < 0.0);
  auto cfg = scenario::named_scenario("sca1-harsh");
  cfg.autopilot.pd_K_p = -1.0;
  cfg.autopilot.pd_K_r = -0.5;
  CHECK(pd_gains_for(cfg).K_p == -1.0);
}

TEST_CASE("human supervisory commands replay bit for bit") {
  auto cfg = scenario::named_scenario("sca2-perf");
  scenario::RunOptions opts;
  opts.pilot = "human";
  scenario::apply_run_options(cfg, opts);
  auto agent = make_pilot(cfg);
  auto* human = dynamic_cast<pilot::HumanAdapter*>(agent.get());
  REQUIRE(human != nullptr);
  Engine eng(cfg, *agent);
  while (!eng.done()) {
    if (eng.next_step() == 3350) human->push({pilot::HumanCommandKind::mu_input, 8.0, "", eng.time(), std::nullopt});
    if (eng.next_step() == 3400)
      human->push({pilot::HumanCommandKind::severity_estimate, 0.0, "Middle", eng.time(), std::nullopt});
    if (eng.next_step() == 3500) human->push({pilot::HumanCommandKind::stick, 1.0, "", eng.time(), std::nullopt});
    eng.step();
  }
  const auto log = eng.log();
  CHECK(log.events_of("mu_input").size() == 1);
  CHECK(log.events_of("rejected").size() == 1);
  CHECK(log.steps.back().mu == 8.0);
  CHECK(recorded_commands(log).size() == 3);
  const auto v = replay(log);
  INFO(v.message);
  CHECK(v.pass);
}

TEST_CASE("engine refuses invalid configurations") {
  auto cfg = scenario::named_scenario("sca2-perf");
  cfg.plant.x0 = Vec::Zero(2);
  pilot::NoPilot none;
  CHECK_THROWS_AS(Engine(cfg, none), ConfigError);
}
