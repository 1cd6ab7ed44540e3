#include "sca/engine.hpp"

#include "sca/errors.hpp"

#include <cmath>

namespace sca::engine {

using nlohmann::json;
using scenario::AlertPolicy;
using scenario::PilotKind;
using scenario::ScenarioConfig;

namespace {

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

adaptive::AdaptiveConfig adaptive_config(const ScenarioConfig& cfg) {
  adaptive::AdaptiveConfig a;
  switch (cfg.autopilot.kind) {
    case scenario::AutopilotSpecKind::adaptive:
      a.kind = adaptive::AutopilotKind::adaptive;
      break;
    case scenario::AutopilotSpecKind::mu_mod:
      a.kind = adaptive::AutopilotKind::mu_mod;
      break;
    case scenario::AutopilotSpecKind::optimal:
      a.kind = adaptive::AutopilotKind::optimal;
      break;
    case scenario::AutopilotSpecKind::pd:
      throw ConfigError("state-space scenarios cannot use the PD autopilot");
  }
  a.mu = cfg.autopilot.mu;
  a.delta = cfg.autopilot.delta;
  a.ell = cfg.autopilot.ell;
  a.gamma = cfg.autopilot.gamma;
  a.Q = cfg.autopilot.Q;
  a.Q_lqr = cfg.autopilot.Q_lqr;
  a.R_lqr = cfg.autopilot.R_lqr;
  a.C = cfg.plant.C;
  return a;
}

dynamics::StateSpacePlant make_state_space(const ScenarioConfig& cfg) {
  auto plant = dynamics::StateSpacePlant::linear(cfg.plant.A, cfg.plant.B, cfg.plant.x0);
  if (cfg.plant.d.size() > 0) plant.d = cfg.plant.d;
  plant.regressor.kind = cfg.plant.regressor;
  if (cfg.plant.Phi.size() > 0) plant.Phi = cfg.plant.Phi;
  else if (cfg.plant.regressor != dynamics::RegressorKind::none)
    plant.Phi = Mat::Zero(plant.regressor.size(plant.states()), plant.states());
  plant.validate();
  return plant;
}

double min_cfm(const Vec& u, const Vec& u_max) { return (1.0 - u.cwiseAbs().cwiseQuotient(u_max).array()).minCoeff(); }

}  // namespace

pd::PdGains pd_gains_for(const ScenarioConfig& cfg) {
  pd::PdGains g;
  if (cfg.autopilot.pd_K_p && cfg.autopilot.pd_K_r) {
    g = {*cfg.autopilot.pd_K_p, *cfg.autopilot.pd_K_r};
  } else {
    g = pd::synthesize_pd(cfg.plant.tf, cfg.autopilot.pd_zeta, cfg.autopilot.pd_omega);
  }
  pd::require_stabilizing(cfg.plant.tf, g);
  return g;
}

pilot::PerceptionCalibration calibrate(const ScenarioConfig& cfg) {
  if (cfg.plant.kind != scenario::PlantKind::transfer_function)
    throw CalibrationError("perception calibration is defined for the transfer-function scenarios");
  const auto gains = pd_gains_for(cfg);
  dynamics::TransferFunctionPlant plant(cfg.plant.tf, cfg.dt);
  plant.set_output_derivatives({cfg.command.value(0.0)[0], cfg.command.rate(0.0)[0]});
  const long n = std::lround(cfg.perception.calibration_duration / cfg.dt);
  std::vector<double> min_c;
  min_c.reserve(static_cast<std::size_t>(n) + 1);
  for (long k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) * cfg.dt;
    const double u_c =
        pd::pd_control(gains, plant.output(), cfg.command.value(t)[0], plant.output_derivative(1));
    const Vec u = dynamics::saturate(Vec::Constant(1, u_c), cfg.actuator);
    min_c.push_back(min_cfm(u, cfg.actuator.u_max));
    plant.step(u[0]);
  }
  return pilot::calibrate_perception(min_c, cfg.dt, cfg.perception.warmup);
}

Engine::Engine(ScenarioConfig cfg, pilot::PilotAgent& pilot, std::optional<pilot::PerceptionCalibration> calibration)
    : cfg_(std::move(cfg)), pilot_(pilot) {
  cfg_.validate();
  last_step_ = cfg_.steps();
  applied_.assign(cfg_.anomalies.size(), false);
  log_.config = scenario::to_json(cfg_);
  log_.config_hash = scenario::config_hash(log_.config);
  log_.seed = cfg_.seed;
  log_.dt = cfg_.dt;
  active_ = "autopilot";
  u_prev_ = Vec::Zero(cfg_.actuator.channels());

  if (cfg_.is_sca1()) {
    pd_ = pd_gains_for(cfg_);
    tf_plant_.emplace(cfg_.plant.tf, cfg_.dt);
    tf_plant_->set_output_derivatives({cfg_.command.value(0.0)[0], cfg_.command.rate(0.0)[0]});
    const auto cal = calibration ? *calibration : (cfg_.perception.calibration ? *cfg_.perception.calibration : calibrate(cfg_));
    perception_.emplace(cal, cfg_.dt, cfg_.perception.warmup);
    add_event("calibration", {{"mu_p", cal.mu_p}, {"sigma_p", cal.sigma_p}});
  } else {
    ss_plant_ = make_state_space(cfg_);
    autopilot_.emplace(*ss_plant_, cfg_.actuator, adaptive_config(cfg_));
    lambda_hat_ = Vec::Ones(cfg_.actuator.channels());
  }
}

double Engine::mu() const { return autopilot_ ? autopilot_->mu() : 0.0; }

void Engine::add_event(const std::string& type, json payload) {
  log_.events.push_back({step_, time(), type, std::move(payload)});
}

void Engine::note(const std::string& type, json payload) { add_event(type, std::move(payload)); }

void Engine::fault(const std::string& what) {
  faulted_ = true;
  log_.faulted = true;
  log_.fault = what;
  add_event("fault", {{"message", what}});
}

void Engine::apply_due_anomalies(double t) {
  for (std::size_t i = 0; i < cfg_.anomalies.size(); ++i) {
    const auto& a = cfg_.anomalies[i];
    if (applied_[i] || t + 1e-9 < a.t_a) continue;
    if (tf_plant_) dynamics::apply_anomaly(*tf_plant_, a, t);
    if (ss_plant_) dynamics::apply_anomaly(*ss_plant_, a, t);
    applied_[i] = true;
    announced_.push_back(a);
    json payload = {{"id", a.id}, {"t_a", a.t_a}, {"severity", a.severity}, {"color", a.color}};
    if (const auto* loe = std::get_if<dynamics::LossOfEffectiveness>(&a.kind)) payload["lambda"] = vec_json(loe->lambda);
    add_event("anomaly", payload);
  }
}

StepRecord Engine::step_sca1(double t) {
  auto& plant = *tf_plant_;
  auto& perception = *perception_;
  const double y = plant.output();
  const double ydot = plant.output_derivative(1);
  const double r0 = cfg_.command.value(t)[0];
  const double e = r0 - y;

  if (!alert_time_ && (cfg_.alert.policy == AlertPolicy::late || cfg_.alert.policy == AlertPolicy::exact)) {
    const double t_s = cfg_.anomalies.front().t_a + cfg_.alert.delta_t;
    if (t + 1e-9 >= t_s) {
      alert_time_ = t;
      add_event("alert", {{"policy", scenario::to_string(cfg_.alert.policy)}, {"t_s", t_s}, {"color", "red"}});
    }
  }

  pilot::PilotObservation obs;
  obs.step = step_;
  obs.t = t;
  obs.e_display = e;
  obs.alert_time = alert_time_;
  obs.K_t = perception.K_t();
  auto action = pilot_.act(obs);
  for (auto& ev : action.events) log_.events.push_back(std::move(ev));
  if (action.take_over && active_ == "autopilot" && alert_time_) {
    active_ = "pilot";
    add_event("take_over", {{"command", "take_over"},
                            {"received_at", action.take_over_received_at},
                            {"K_t", perception.K_t()},
                            {"pilot", pilot_.kind()}});
  }

  const double u_c = active_ == "pilot" ? action.stick.value_or(0.0) : pd::pd_control(pd_, y, r0, ydot);
  const Vec uc = Vec::Constant(1, u_c);
  const Vec u = cfg_.actuator.rate_max ? dynamics::saturate(uc, cfg_.actuator, u_prev_, cfg_.dt)
                                       : dynamics::saturate(uc, cfg_.actuator);
  const Vec c = (1.0 - u.cwiseAbs().cwiseQuotient(cfg_.actuator.u_max).array()).matrix();
  const auto p = perception.observe(c.minCoeff(), t);
  if (p.fired) {
    add_event("perception_trigger", {{"F0", p.F0}});
    if (cfg_.alert.policy == AlertPolicy::cfm_based && !alert_time_) {
      alert_time_ = t;
      add_event("alert", {{"policy", "cfm_based"}, {"t_s", t}, {"color", "red"}});
    }
  }

  StepRecord rec;
  rec.step = step_;
  rec.t = t;
  rec.x = (Vec(2) << y, ydot).finished();
  rec.r0 = Vec::Constant(1, r0);
  rec.y = Vec::Constant(1, y);
  rec.u_c = uc;
  rec.u = u;
  rec.c = c;
  rec.e = Vec::Constant(1, e);
  rec.F0 = p.F0;
  rec.K_t = p.K_t;
  rec.active = active_;

  plant.step(u[0]);
  if (!std::isfinite(plant.output()) || !plant.state().allFinite())
    throw SimulationFault("non-finite plant state at t = " + std::to_string(t + cfg_.dt));
  u_prev_ = u;
  return rec;
}

StepRecord Engine::step_sca2(double t) {
  auto& plant = *ss_plant_;
  auto& ap = *autopilot_;
  const Vec x = plant.x;
  const Vec r0 = cfg_.command.value(t);

  pilot::PilotObservation obs;
  obs.step = step_;
  obs.t = t;
  obs.e_display = 0.0;
  obs.announced = announced_;
  auto action = pilot_.act(obs);
  for (auto& ev : action.events) log_.events.push_back(std::move(ev));
  if (action.directives) {
    const auto& d = *action.directives;
    if (cfg_.autopilot.mu_from_pilot) ap.set_mu(d.mu);
    if (d.lambda_hat && cfg_.pilot.kind != PilotKind::sup) {
      Vec lam = d.lambda_hat->size() == 1 ? Vec(Vec::Constant(cfg_.actuator.channels(), (*d.lambda_hat)[0]))
                                          : *d.lambda_hat;
      if (lam.size() != cfg_.actuator.channels()) throw ContractViolation("severity estimate dimension mismatch");
      try {
        ap.rematch(lam);
        lambda_hat_ = lam;
      } catch (const SynthesisError& e) {
        // the current reference model stays in force
        add_event("directive_rejected", {{"lambda_hat", std::vector<double>(lam.data(), lam.data() + lam.size())},
                                         {"reason", e.what()}});
      }
    }
  }

  const auto out = ap.control(x, r0);
  const Vec c = (1.0 - out.u.cwiseAbs().cwiseQuotient(cfg_.actuator.u_max).array()).matrix();

  StepRecord rec;
  rec.step = step_;
  rec.t = t;
  rec.x = x;
  rec.x_m = ap.reference().x_m;
  rec.y_m = cfg_.plant.C * rec.x_m;
  rec.r0 = r0;
  rec.y = cfg_.plant.C * x;
  rec.u_ad = out.u_ad;
  rec.u_c = out.u_c;
  rec.u = out.u;
  rec.c = c;
  rec.e = rec.y - rec.y_m;
  rec.mu = ap.mu();
  rec.lambda_hat = lambda_hat_;
  rec.active = active_;

  plant.x = dynamics::step_state_space(plant, out.u, cfg_.dt);
  ap.advance(x, r0, out, cfg_.dt);
  if (!ap.reference().x_m.allFinite() || !ap.gains().K_x.allFinite())
    throw SimulationFault("non-finite controller state at t = " + std::to_string(t + cfg_.dt));
  u_prev_ = out.u;
  return rec;
}

const StepRecord& Engine::step() {
  if (done()) throw ContractViolation("engine: run already complete");
  const double t = time();
  try {
    apply_due_anomalies(t);
    log_.steps.push_back(cfg_.is_sca1() ? step_sca1(t) : step_sca2(t));
  } catch (const SimulationFault& e) {
    fault(e.what());
    if (log_.steps.empty()) throw;
    return log_.steps.back();
  } catch (const SynthesisError& e) {
    fault(e.what());
    if (log_.steps.empty()) throw;
    return log_.steps.back();
  }
  ++step_;
  return log_.steps.back();
}

void Engine::run_to_end() {
  while (!done()) step();
}

std::unique_ptr<pilot::PilotAgent> make_pilot(const ScenarioConfig& cfg) {
  switch (cfg.pilot.kind) {
    case PilotKind::none:
      return std::make_unique<pilot::NoPilot>();
    case PilotKind::crossover: {
      const auto& switches = cfg.anomalies;
      const auto* sw = std::get_if<dynamics::DynamicsSwitch>(&switches.front().kind);
      if (!sw) throw ConfigError("crossover pilot needs a dynamics-switch anomaly");
      return std::make_unique<pilot::SyntheticSca1Pilot>(cfg.plant.tf, sw->target, cfg.pilot.sca1, cfg.dt, cfg.seed);
    }
    case PilotKind::sap:
    case PilotKind::sup: {
      auto policy = cfg.pilot.policy;
      policy.variant = cfg.pilot.kind == PilotKind::sap ? pilot::SupervisoryVariant::sap : pilot::SupervisoryVariant::sup;
      return std::make_unique<pilot::SyntheticSupervisor>(policy, cfg.pilot.lambda_error, cfg.seed);
    }
    case PilotKind::human:
      return std::make_unique<pilot::HumanAdapter>(!cfg.is_sca1(), cfg.pilot.lambda_error, cfg.seed);
  }
  throw ConfigError("unknown pilot kind");
}

RunLog run_scenario(const ScenarioConfig& cfg, pilot::PilotAgent& agent) {
  Engine engine(cfg, agent);
  engine.run_to_end();
  return engine.take_log();
}

RunLog run_scenario(const ScenarioConfig& cfg) {
  auto agent = make_pilot(cfg);
  return run_scenario(cfg, *agent);
}

std::vector<pilot::HumanCommand> recorded_commands(const RunLog& log) {
  std::vector<pilot::HumanCommand> out;
  for (const auto& ev : log.events) {
    if (!ev.payload.is_object() || !ev.payload.contains("command")) continue;
    pilot::HumanCommand cmd;
    cmd.kind = pilot::human_command_from_string(ev.payload.at("command").get<std::string>());
    cmd.value = ev.payload.value("value", 0.0);
    cmd.label = ev.payload.value("label", std::string());
    cmd.received_at = ev.payload.value("received_at", ev.t);
    cmd.apply_at_step = ev.step;
    out.push_back(cmd);
  }
  return out;
}

ReplayVerdict replay(const RunLog& log) {
  ReplayVerdict v;
  ScenarioConfig cfg;
  try {
    cfg = scenario::config_from_json(log.config);
  } catch (const ConfigError& e) {
    v.message = std::string("FAIL: embedded config unreadable: ") + e.what();
    return v;
  }
  if (scenario::config_hash(cfg) != log.config_hash) {
    v.hash_mismatch = true;
    v.message = "FAIL: config hash mismatch (log " + format_hash(log.config_hash) + ", config " +
                format_hash(scenario::config_hash(cfg)) + ")";
    return v;
  }
  if (cfg.seed != log.seed) {
    v.hash_mismatch = true;
    v.message = "FAIL: seed in header does not match the embedded config";
    return v;
  }
  auto agent = make_pilot(cfg);
  if (auto* human = dynamic_cast<pilot::HumanAdapter*>(agent.get()))
    for (auto& cmd : recorded_commands(log)) human->push(cmd);

  Engine engine(cfg, *agent);
  std::size_t k = 0;
  while (!engine.done()) {
    const auto before = engine.log().steps.size();
    const auto& rec = engine.step();
    if (engine.log().steps.size() == before) break;
    if (k >= log.steps.size() || !(rec == log.steps[k])) {
      v.first_divergent_step = rec.step;
      v.message = "FAIL: first divergent step " + std::to_string(rec.step) + " (t = " + std::to_string(rec.t) + ")";
      return v;
    }
    ++k;
  }
  if (k != log.steps.size()) {
    v.first_divergent_step = static_cast<long>(k);
    v.message = "FAIL: log holds " + std::to_string(log.steps.size()) + " steps, replay produced " + std::to_string(k);
    return v;
  }
  if (engine.faulted() != log.faulted) {
    v.message = "FAIL: fault status differs";
    return v;
  }
  v.pass = true;
  v.message = "PASS: " + std::to_string(k) + " steps bit-identical";
  return v;
}

}  // namespace sca::engine
