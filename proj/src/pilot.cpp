#include "sca/pilot.hpp"

#include "sca/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sca::pilot {

using dynamics::TransferFunction;
using dynamics::TransferFunctionPlant;

TransferFunction g1_filter() { return {{2.25}, {1.0, 1.5, 2.25}, 0.0}; }

TransferFunction neuromuscular_filter() { return {{100.0}, {1.0, 14.14, 100.0}, 0.0}; }

std::vector<double> cfm_rate_samples(const std::vector<double>& min_c, double dt, double warmup) {
  if (!(dt > 0.0)) throw ContractViolation("cfm_rate_samples: dt must be positive");
  std::vector<double> out;
  for (std::size_t k = 1; k < min_c.size(); ++k) {
    if (static_cast<double>(k) * dt < warmup - 1e-9) continue;
    out.push_back(std::abs(min_c[k] - min_c[k - 1]) / dt);
  }
  return out;
}

PerceptionCalibration calibrate_perception(const std::vector<double>& min_c, double dt, double warmup) {
  const double duration = dt * static_cast<double>(min_c.size() > 0 ? min_c.size() - 1 : 0);
  if (duration < kMinCalibrationDuration - 1e-9)
    throw CalibrationError("perception calibration needs at least 180 s of nominal flight, got " +
                           std::to_string(duration) + " s");
  const auto rates = cfm_rate_samples(min_c, dt, warmup);
  const double n = static_cast<double>(rates.size());
  const double mean = std::accumulate(rates.begin(), rates.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rates) var += (r - mean) * (r - mean);
  var /= n;
  PerceptionCalibration cal{mean, std::sqrt(var)};
  if (!(cal.sigma_p > 0.0)) throw CalibrationError("perception calibration: CfM rate has zero spread (sigma_p = 0)");
  return cal;
}

PerceptionCalibration calibrate_perception(const RunLog& nominal, const Vec& u_max, double warmup) {
  if (!nominal.events_of("anomaly").empty())
    throw CalibrationError("perception calibration requires an anomaly-free run");
  std::vector<double> min_c;
  min_c.reserve(nominal.steps.size());
  for (const auto& s : nominal.steps) {
    if (s.u.size() != u_max.size()) throw CalibrationError("perception calibration: actuator dimension mismatch");
    min_c.push_back((1.0 - s.u.cwiseAbs().cwiseQuotient(u_max).array()).minCoeff());
  }
  return calibrate_perception(min_c, nominal.dt, warmup);
}

PerceptionState::PerceptionState(PerceptionCalibration cal, double dt, double warmup)
    : cal_(cal), dt_(dt), warmup_(warmup), g1_(g1_filter(), dt) {
  if (!(cal_.sigma_p > 0.0)) throw CalibrationError("perception: sigma_p must be positive");
}

PerceptionState::Output PerceptionState::step(double cfm_rate, double t) {
  const double F = (cfm_rate - cal_.mu_p) / (3.0 * cal_.sigma_p);
  F0_ = g1_.step(F);
  Output out;
  if (K_t_ == 0 && std::abs(F0_) >= 1.0) {
    K_t_ = 1;
    t_trigger_ = t;
    out.fired = true;
  }
  out.K_t = K_t_;
  out.F0 = F0_;
  return out;
}

PerceptionState::Output PerceptionState::observe(double min_c, double t) {
  const auto prev = prev_c_;
  prev_c_ = min_c;
  if (!prev || t < warmup_ - 1e-9) return {K_t_, F0_, false};
  return step(std::abs(min_c - *prev) / dt_, t);
}

PerceptionState::Output perception_step(PerceptionState& state, double cfm_rate, double t) {
  return state.step(cfm_rate, t);
}

std::string to_string(AdaptationMode mode) {
  switch (mode) {
    case AdaptationMode::gain:
      return "gain";
    case AdaptationMode::lead:
      return "lead";
    case AdaptationMode::lag:
      return "lag";
  }
  return "gain";
}

void CrossoverConfig::validate() const {
  if (!(omega_c > 0.0)) throw ContractViolation("crossover: omega_c must be positive");
  if (!(tau_e >= 0.0)) throw ContractViolation("crossover: tau_e must be non-negative");
  if (!(lowpass_factor > 1.0)) throw ContractViolation("crossover: lowpass_factor must exceed 1");
}

namespace {

std::complex<double> rational(const TransferFunction& tf, double omega) {
  const std::complex<double> s(0.0, omega);
  return poly_eval(tf.num, s) / poly_eval(tf.den, s);
}

}  // namespace

PilotRealization realize_crossover(const TransferFunction& Y_p, const CrossoverConfig& cfg) {
  cfg.validate();
  Y_p.validate();
  Poly num = poly_scale(poly_trim(Y_p.den), cfg.omega_c);
  Poly den = poly_multiply({1.0, 0.0}, poly_trim(Y_p.num));
  if (poly_degree(den) < 0) throw RealizationError("crossover: plant numerator is zero");
  // cancel common factors of s
  while (num.size() > 1 && den.size() > 1 && num.back() == 0.0 && den.back() == 0.0) {
    num.pop_back();
    den.pop_back();
  }
  PilotRealization out;
  const int excess = poly_degree(num) - poly_degree(den);
  const double omega_l = cfg.lowpass_factor * cfg.omega_c;
  double lag = 0.0;
  for (int i = 0; i < excess; ++i) {
    den = poly_multiply(den, {1.0 / omega_l, 1.0});
    lag += std::atan(cfg.omega_c / omega_l);
  }
  out.lowpass_order = std::max(excess, 0);
  const double delay = cfg.tau_e - Y_p.delay - lag / cfg.omega_c;
  if (delay < -1e-12)
    throw RealizationError("crossover: effective delay " + std::to_string(cfg.tau_e) +
                           " s cannot absorb the plant delay and low-pass lag (" +
                           std::to_string(Y_p.delay + lag / cfg.omega_c) + " s)");

  TransferFunction Y_h{num, den, std::max(delay, 0.0)};
  const double mag = std::abs(rational(Y_h, cfg.omega_c) * rational(Y_p, cfg.omega_c));
  if (!(mag > 0.0) || !std::isfinite(mag)) throw RealizationError("crossover: degenerate loop gain at omega_c");
  out.gain = 1.0 / mag;
  Y_h.num = poly_scale(Y_h.num, out.gain);
  Y_h.validate();
  out.Y_h = Y_h;

  const double phase_deg = std::arg(rational(Y_h, cfg.omega_c)) * 180.0 / M_PI;
  out.mode = phase_deg > 1.0 ? AdaptationMode::lead : (phase_deg < -1.0 ? AdaptationMode::lag : AdaptationMode::gain);
  return out;
}

std::complex<double> open_loop_response(const PilotRealization& pilot, const TransferFunction& Y_p, double omega) {
  return pilot.Y_h.frequency_response(omega) * Y_p.frequency_response(omega);
}

double phase_margin_deg(const PilotRealization& pilot, const TransferFunction& Y_p, bool with_nm) {
  const TransferFunction nm = neuromuscular_filter();
  auto loop = [&](double w) {
    auto L = open_loop_response(pilot, Y_p, w);
    if (with_nm) L *= nm.frequency_response(w);
    return L;
  };
  // bracket the first unity-gain crossing on a log grid, then bisect
  double lo = 1e-3, hi = lo;
  bool found = false;
  for (double w = 1e-3; w < 1e3; w *= 1.05) {
    if (std::abs(loop(w)) < 1.0) {
      hi = w;
      found = true;
      break;
    }
    lo = w;
  }
  if (!found) throw RealizationError("phase margin: no gain crossover found");
  for (int i = 0; i < 100; ++i) {
    const double mid = std::sqrt(lo * hi);
    (std::abs(loop(mid)) >= 1.0 ? lo : hi) = mid;
  }
  const double wc = std::sqrt(lo * hi);
  // unwrap: delay-free phase plus the delay contribution
  const double delay = pilot.Y_h.delay + Y_p.delay;
  std::complex<double> rational_part = rational(pilot.Y_h, wc) * rational(Y_p, wc);
  if (with_nm) rational_part *= rational(nm, wc);
  double phase = std::arg(rational_part) - wc * delay;
  // rational phase of a loop with one free integrator lies in (−270°, 90°]
  if (phase > 0.0) phase -= 2.0 * M_PI;
  return 180.0 + phase * 180.0 / M_PI;
}

CrossoverPilot::CrossoverPilot(const TransferFunction& nominal_plant, const TransferFunction& adapted_plant,
                               CrossoverPilotConfig cfg, double dt, std::uint64_t seed)
    : cfg_(cfg),
      dt_(dt),
      nominal_(realize_crossover(nominal_plant, cfg.crossover)),
      adapted_(realize_crossover(adapted_plant, cfg.crossover)),
      nominal_tf_(nominal_.Y_h, dt),
      adapted_tf_(adapted_.Y_h, dt),
      nm_(neuromuscular_filter(), dt),
      rng_(seed) {
  if (!(cfg_.adaptation_tau >= 0.0)) throw ContractViolation("crossover pilot: adaptation_tau must be >= 0");
  if (!(cfg_.remnant_std >= 0.0) || !(cfg_.remnant_bandwidth > 0.0))
    throw ContractViolation("crossover pilot: remnant parameters out of range");
}

double CrossoverPilot::blend(double t) const {
  if (t < adapt_start_) return 0.0;
  if (cfg_.adaptation_tau <= 0.0) return 1.0;
  return 1.0 - std::exp(-(t - adapt_start_) / cfg_.adaptation_tau);
}

double CrossoverPilot::step(double e_display, double t) {
  const double alpha = blend(t);
  const double v_nom = nominal_tf_.step(e_display);
  const double v_ad = adapted_tf_.step(e_display);
  if (cfg_.remnant_std > 0.0) {
    const double a = std::exp(-cfg_.remnant_bandwidth * dt_);
    remnant_ = a * remnant_ + cfg_.remnant_std * std::sqrt(1.0 - a * a) * normal_(rng_);
  }
  return nm_.step((1.0 - alpha) * v_nom + alpha * v_ad + remnant_);
}

double crossover_control(CrossoverPilot& pilot, double e_display, double t) { return pilot.step(e_display, t); }

std::string to_string(SupervisoryVariant v) { return v == SupervisoryVariant::sap ? "sap" : "sup"; }

void SupervisoryPolicy::validate() const {
  for (const auto& [label, mu] : mu_table)
    if (mu < adaptive::kMinPilotMu || mu > adaptive::kMaxPilotMu)
      throw ContractViolation("supervisory policy: mu for '" + label + "' outside [1, 20]");
  if (!(reaction_delay >= 0.0) || !(reaction_jitter >= 0.0) || reaction_jitter > reaction_delay)
    throw ContractViolation("supervisory policy: reaction delay parameters out of range");
}

SupervisoryDecision supervisory_decide(const SupervisoryPolicy& policy, const dynamics::AnomalyEvent& event,
                                       std::uint64_t seed) {
  policy.validate();
  const auto it = policy.mu_table.find(event.severity);
  if (it == policy.mu_table.end())
    throw ContractViolation("supervisory policy has no mu for severity '" + event.severity + "'");
  SupervisoryDecision d;
  d.directives.mu = it->second;
  std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(event.id + 1)));
  double delay = policy.reaction_delay;
  if (policy.reaction_jitter > 0.0)
    delay += std::uniform_real_distribution<double>(-policy.reaction_jitter, policy.reaction_jitter)(rng);
  d.emit_time = event.t_a + delay;
  d.directives.emitted_at = d.emit_time;
  if (policy.variant == SupervisoryVariant::sap) {
    const auto* loe = std::get_if<dynamics::LossOfEffectiveness>(&event.kind);
    if (!loe) throw ContractViolation("supervisory pilot needs a loss-of-effectiveness event");
    const auto info = dynamics::severity_for_label(event.severity);
    d.directives.lambda_hat = info ? Vec(Vec::Constant(loe->lambda.size(), info->lambda)) : loe->lambda;
  }
  d.directives.validate();
  return d;
}

Vec inject_severity_error(const Vec& lambda, double magnitude, std::mt19937_64& rng) {
  const double sign = std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0;
  auto valid = [](const Vec& v) { return (v.array() > 0.0).all() && (v.array() <= 1.0).all(); };
  Vec out = lambda.array() + sign * magnitude;
  if (valid(out)) return out;
  out = lambda.array() - sign * magnitude;
  if (valid(out)) return out;
  return (lambda.array() + sign * magnitude).cwiseMax(0.01).cwiseMin(1.0);
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::uint64_t out[1];
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out[0] = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return out[0];
}

Sca1PilotConfig jittered(Sca1PilotConfig cfg, std::uint64_t seed) {
  if (cfg.tau_e_jitter > 0.0) {
    std::mt19937_64 rng(derive_seed(seed, 1));
    cfg.manual.crossover.tau_e += std::uniform_real_distribution<double>(0.0, cfg.tau_e_jitter)(rng);
  }
  return cfg;
}

}  // namespace

SyntheticSca1Pilot::SyntheticSca1Pilot(const TransferFunction& nominal_plant, const TransferFunction& adapted_plant,
                                       Sca1PilotConfig cfg, double dt, std::uint64_t seed)
    : cfg_(jittered(cfg, seed)), manual_(nominal_plant, adapted_plant, cfg_.manual, dt, derive_seed(seed, 2)) {
  if (!(cfg_.reaction_time >= 0.0) || !(cfg_.discovery_latency >= 0.0))
    throw ContractViolation("pilot: reaction time and discovery latency must be non-negative");
}

PilotAction SyntheticSca1Pilot::act(const PilotObservation& obs) {
  PilotAction action;
  if (!in_control_ && obs.alert_time && obs.t >= *obs.alert_time + cfg_.reaction_time - 1e-9) {
    in_control_ = true;
    informed_ = obs.K_t == 1;
    if (informed_)
      manual_.set_adapted();
    else
      manual_.begin_adaptation(obs.t + cfg_.discovery_latency);
    action.take_over = true;
    action.take_over_received_at = obs.t;
  }
  if (in_control_) action.stick = manual_.step(obs.e_display, obs.t);
  return action;
}

SyntheticSupervisor::SyntheticSupervisor(SupervisoryPolicy policy, double lambda_error, std::uint64_t seed)
    : policy_(std::move(policy)), lambda_error_(lambda_error), seed_(seed), rng_(derive_seed(seed, 3)) {
  policy_.validate();
  if (!(lambda_error_ >= 0.0)) throw ContractViolation("supervisor: lambda error must be non-negative");
}

PilotAction SyntheticSupervisor::act(const PilotObservation& obs) {
  for (const auto& ev : obs.announced) {
    if (std::find(handled_.begin(), handled_.end(), ev.id) != handled_.end()) continue;
    handled_.push_back(ev.id);
    pending_.emplace_back(ev.id, supervisory_decide(policy_, ev, seed_));
  }
  PilotAction action;
  for (auto it = pending_.begin(); it != pending_.end();) {
    if (obs.t + 1e-9 < it->second.emit_time) {
      ++it;
      continue;
    }
    auto directives = it->second.directives;
    if (directives.lambda_hat) directives.lambda_hat = inject_severity_error(*directives.lambda_hat, lambda_error_, rng_);
    directives.emitted_at = obs.t;
    nlohmann::json payload = {{"mu", directives.mu}, {"anomaly", it->first}};
    if (directives.lambda_hat)
      payload["lambda_hat"] =
          std::vector<double>(directives.lambda_hat->data(), directives.lambda_hat->data() + directives.lambda_hat->size());
    action.events.push_back({obs.step, obs.t, "directive", payload});
    action.directives = directives;
    it = pending_.erase(it);
  }
  return action;
}

std::string to_string(HumanCommandKind kind) {
  switch (kind) {
    case HumanCommandKind::take_over:
      return "take_over";
    case HumanCommandKind::stick:
      return "stick";
    case HumanCommandKind::mu_input:
      return "mu_input";
    case HumanCommandKind::severity_estimate:
      return "severity_estimate";
  }
  return "stick";
}

HumanCommandKind human_command_from_string(const std::string& name) {
  if (name == "take_over" || name == "TakeOver") return HumanCommandKind::take_over;
  if (name == "stick" || name == "Stick") return HumanCommandKind::stick;
  if (name == "mu_input" || name == "MuInput") return HumanCommandKind::mu_input;
  if (name == "severity_estimate" || name == "SeverityEstimate") return HumanCommandKind::severity_estimate;
  throw ContractViolation("unknown pilot command '" + name + "'");
}

HumanAdapter::HumanAdapter(bool supervisory, double lambda_error, std::uint64_t seed)
    : supervisory_(supervisory), lambda_error_(lambda_error), rng_(derive_seed(seed, 3)) {}

void HumanAdapter::push(HumanCommand cmd) {
  std::lock_guard<std::mutex> lock(mutex_);
  queue_.push_back(std::move(cmd));
}

void HumanAdapter::set_disconnected(bool value) {
  std::lock_guard<std::mutex> lock(mutex_);
  disconnected_ = value;
}

bool HumanAdapter::disconnected() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return disconnected_;
}

PilotAction HumanAdapter::act(const PilotObservation& obs) {
  std::deque<HumanCommand> ready;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    while (!queue_.empty() && (!queue_.front().apply_at_step || *queue_.front().apply_at_step <= obs.step)) {
      ready.push_back(std::move(queue_.front()));
      queue_.pop_front();
    }
  }
  PilotAction action;
  auto record = [&](const std::string& type, nlohmann::json payload) {
    action.events.push_back({obs.step, obs.t, type, std::move(payload)});
  };
  for (const auto& cmd : ready) {
    const nlohmann::json base = {{"command", to_string(cmd.kind)}, {"value", cmd.value}, {"label", cmd.label},
                                 {"received_at", cmd.received_at}};
    switch (cmd.kind) {
      case HumanCommandKind::take_over: {
        if (supervisory_) {
          auto p = base;
          p["reason"] = "the autopilot is always in control in the supervisory architecture";
          record("rejected", p);
        } else if (!obs.alert_time || cmd.received_at + 1e-9 < *obs.alert_time) {
          auto p = base;
          p["reason"] = "take-over before the alert";
          record("rejected", p);
        } else if (!in_control_) {
          in_control_ = true;
          action.take_over = true;
          action.take_over_received_at = cmd.received_at;
          reaction_time_ = cmd.received_at - *obs.alert_time;
        }
        break;
      }
      case HumanCommandKind::stick:
        if (supervisory_) {
          auto p = base;
          p["reason"] = "stick input is disabled in the supervisory architecture";
          record("rejected", p);
        } else {
          stick_ = cmd.value;
          record("stick", base);
        }
        break;
      case HumanCommandKind::mu_input: {
        const double v = cmd.value;
        if (v != std::floor(v) || v < adaptive::kMinPilotMu || v > adaptive::kMaxPilotMu) {
          auto p = base;
          p["reason"] = "mu outside Range [1, 20]";
          record("rejected", p);
          break;
        }
        mu_ = static_cast<int>(v);
        adaptive::PilotDirectives d;
        d.mu = mu_;
        d.emitted_at = cmd.received_at;
        action.directives = d;
        record("mu_input", base);
        break;
      }
      case HumanCommandKind::severity_estimate: {
        const auto info = dynamics::severity_for_label(cmd.label);
        if (!info) {
          auto p = base;
          p["reason"] = "unknown severity label";
          record("rejected", p);
          break;
        }
        adaptive::PilotDirectives d = action.directives.value_or(adaptive::PilotDirectives{mu_, std::nullopt, 0.0});
        d.mu = mu_;
        d.lambda_hat = Vec::Constant(1, info->lambda);  // resized by the engine to the input count
        d.emitted_at = cmd.received_at;
        action.directives = d;
        action.severity_label = info->label;
        record("severity_estimate", base);
        break;
      }
    }
  }
  (void)lambda_error_;
  if (in_control_) action.stick = stick_;
  return action;
}

}  // namespace sca::pilot
