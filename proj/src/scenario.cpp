#include "sca/scenario.hpp"

#include "sca/errors.hpp"
#include "sca/runlog.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#ifndef SCA_DATA_DIR
#define SCA_DATA_DIR "data"
#endif

namespace sca::scenario {

using nlohmann::json;

double CommandChannel::value(double t) const {
  double v = offset;
  for (const auto& s : sines) v += s.amplitude * std::sin(s.omega * t + s.phase);
  if (!points.empty()) {
    if (t <= points.front()[0]) {
      v += points.front()[1];
    } else if (t >= points.back()[0]) {
      v += points.back()[1];
    } else {
      for (std::size_t i = 1; i < points.size(); ++i) {
        if (t <= points[i][0]) {
          const auto& a = points[i - 1];
          const auto& b = points[i];
          v += a[1] + (b[1] - a[1]) * (t - a[0]) / (b[0] - a[0]);
          break;
        }
      }
    }
  }
  return v;
}

double CommandChannel::rate(double t) const {
  double v = 0.0;
  for (const auto& s : sines) v += s.amplitude * s.omega * std::cos(s.omega * t + s.phase);
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (t >= points[i - 1][0] && t < points[i][0]) {
      v += (points[i][1] - points[i - 1][1]) / (points[i][0] - points[i - 1][0]);
      break;
    }
  }
  return v;
}

Vec CommandProfile::value(double t) const {
  Vec v(channels.size());
  for (std::size_t i = 0; i < channels.size(); ++i) v[static_cast<Eigen::Index>(i)] = channels[i].value(t);
  return v;
}

Vec CommandProfile::rate(double t) const {
  Vec v(channels.size());
  for (std::size_t i = 0; i < channels.size(); ++i) v[static_cast<Eigen::Index>(i)] = channels[i].rate(t);
  return v;
}

std::string to_string(AutopilotSpecKind kind) {
  switch (kind) {
    case AutopilotSpecKind::pd:
      return "pd";
    case AutopilotSpecKind::adaptive:
      return "adaptive";
    case AutopilotSpecKind::mu_mod:
      return "mu_mod";
    case AutopilotSpecKind::optimal:
      return "optimal";
  }
  return "pd";
}

AutopilotSpecKind autopilot_spec_from_string(const std::string& name) {
  if (name == "pd") return AutopilotSpecKind::pd;
  if (name == "adaptive") return AutopilotSpecKind::adaptive;
  if (name == "mu_mod" || name == "mu-mod") return AutopilotSpecKind::mu_mod;
  if (name == "optimal") return AutopilotSpecKind::optimal;
  throw ConfigError("unknown autopilot kind '" + name + "'");
}

std::string to_string(PilotKind kind) {
  switch (kind) {
    case PilotKind::none:
      return "none";
    case PilotKind::crossover:
      return "crossover";
    case PilotKind::sap:
      return "sap";
    case PilotKind::sup:
      return "sup";
    case PilotKind::human:
      return "human";
  }
  return "none";
}

PilotKind pilot_kind_from_string(const std::string& name) {
  if (name == "none") return PilotKind::none;
  if (name == "crossover" || name == "synthetic") return PilotKind::crossover;
  if (name == "sap" || name == "SAP") return PilotKind::sap;
  if (name == "sup" || name == "SUP") return PilotKind::sup;
  if (name == "human") return PilotKind::human;
  throw ConfigError("unknown pilot kind '" + name + "'");
}

std::string to_string(AlertPolicy policy) {
  switch (policy) {
    case AlertPolicy::none:
      return "none";
    case AlertPolicy::late:
      return "late";
    case AlertPolicy::exact:
      return "exact";
    case AlertPolicy::cfm_based:
      return "cfm_based";
  }
  return "none";
}

AlertPolicy alert_policy_from_string(const std::string& name) {
  if (name == "none" || name == "auto") return AlertPolicy::none;
  if (name == "late") return AlertPolicy::late;
  if (name == "exact") return AlertPolicy::exact;
  if (name == "cfm_based" || name == "cfm-based" || name == "cfm") return AlertPolicy::cfm_based;
  throw ConfigError("unknown alert policy '" + name + "'");
}

long ScenarioConfig::steps() const { return std::lround(duration / dt); }

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid scenario: " + msg); };
  if (!(dt > 0.0)) fail("dt must be positive");
  if (!(duration > 0.0)) fail("duration must be positive");
  if (std::abs(duration / dt - std::round(duration / dt)) > 1e-6) fail("duration must be a multiple of dt");
  if (family != "sca1" && family != "sca2") fail("family must be sca1 or sca2, got '" + family + "'");
  try {
    actuator.validate();
  } catch (const ContractViolation& e) {
    fail(e.what());
  }
  if (!(metrics_delta >= 0.0 && metrics_delta < 1.0)) fail("metrics.delta must lie in [0, 1)");

  if (family == "sca1") {
    if (plant.kind != PlantKind::transfer_function) fail("sca1 needs a transfer-function plant");
    try {
      plant.tf.validate();
    } catch (const ContractViolation& e) {
      fail(e.what());
    }
    if (actuator.channels() != 1) fail("sca1 plant has one input");
    if (command.channels.size() != 1) fail("sca1 command has one channel");
    if (autopilot.kind != AutopilotSpecKind::pd) fail("sca1 uses the PD autopilot");
    if (pilot.kind == PilotKind::sap || pilot.kind == PilotKind::sup) fail("supervisory pilots belong to sca2");
  } else {
    if (plant.kind != PlantKind::state_space) fail("sca2 needs a state-space plant");
    const auto n = plant.A.rows();
    if (n == 0 || plant.A.cols() != n) fail("A must be square and non-empty");
    if (plant.B.rows() != n) fail("B must have as many rows as A");
    if (plant.x0.size() != n) fail("x0 dimension mismatch");
    if (plant.C.cols() != n || plant.C.rows() != plant.B.cols()) fail("C must be m x n (one commanded output per input)");
    if (actuator.channels() != plant.B.cols()) fail("actuator channels must match the columns of B");
    if (static_cast<Eigen::Index>(command.channels.size()) != plant.C.rows()) fail("one command channel per output");
    if (plant.d.size() != 0 && plant.d.size() != n) fail("d dimension mismatch");
    if (autopilot.kind == AutopilotSpecKind::pd) fail("sca2 uses a state-space autopilot");
    if (pilot.kind == PilotKind::crossover) fail("the crossover pilot belongs to sca1");
    if ((pilot.kind == PilotKind::sap || pilot.kind == PilotKind::sup) && autopilot.kind != AutopilotSpecKind::mu_mod)
      fail("supervisory pilots need the mu_mod autopilot");
    if (autopilot.mu_from_pilot && autopilot.kind != AutopilotSpecKind::mu_mod) fail("mu_from_pilot needs mu_mod");
    if (!(autopilot.mu >= 0.0)) fail("mu must be non-negative");
    if (!(autopilot.delta >= 0.0 && autopilot.delta < 1.0)) fail("delta must lie in [0, 1)");
    if (!(pilot.lambda_error >= 0.0)) fail("lambda_error must be non-negative");
    if (pilot.kind == PilotKind::sap || pilot.kind == PilotKind::sup) {
      try {
        pilot.policy.validate();
      } catch (const ContractViolation& e) {
        fail(e.what());
      }
      for (const auto& a : anomalies)
        if (!pilot.policy.mu_table.count(a.severity)) fail("mu table has no entry for severity '" + a.severity + "'");
    }
  }

  if (alert.policy != AlertPolicy::none) {
    if (family != "sca1") fail("alert policies apply to sca1 only");
    if (pilot.kind != PilotKind::crossover && pilot.kind != PilotKind::human)
      fail("alert policy needs a crossover or human pilot");
  }
  if (!(alert.delta_t >= 0.0)) fail("alert delta_t must be non-negative");
  if (anomalies.empty()) fail("at least one anomaly is required");
  for (std::size_t i = 0; i < anomalies.size(); ++i) {
    const auto& a = anomalies[i];
    try {
      a.validate();
    } catch (const ContractViolation& e) {
      fail(e.what());
    }
    if (a.t_a > duration) fail("anomaly time beyond the run duration");
    if (i > 0 && a.t_a < anomalies[i - 1].t_a) fail("anomalies must be sorted by time");
    const bool loe = std::holds_alternative<dynamics::LossOfEffectiveness>(a.kind);
    if (family == "sca1" && loe) fail("sca1 anomalies are dynamics switches");
    if (family == "sca2" && !loe) fail("sca2 anomalies are loss-of-effectiveness events");
    if (loe && std::get<dynamics::LossOfEffectiveness>(a.kind).lambda.size() != actuator.channels())
      fail("lambda dimension must match the actuator channels");
  }
  if (training.randomize && training.windows.size() != anomalies.size()) fail("one training window per anomaly");
  for (const auto& w : training.windows)
    if (!(w[0] <= w[1])) fail("training window bounds out of order");
  if (!(perception.warmup >= 0.0)) fail("perception warmup must be non-negative");
  if (perception.calibration_duration < pilot::kMinCalibrationDuration)
    fail("perception calibration duration must be at least 180 s");
  if (perception.calibration && !(perception.calibration->sigma_p > 0.0)) fail("perception sigma_p must be positive");
}

namespace {

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json mat_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec_json(m.row(i).transpose()));
  return rows;
}

Mat json_mat(const json& j) {
  if (j.empty()) return Mat();
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.at(0).size());
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j.at(i).size()) != cols) throw ConfigError("ragged matrix in config");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).get<double>();
  }
  return m;
}

json tf_json(const dynamics::TransferFunction& tf) { return {{"num", tf.num}, {"den", tf.den}, {"delay", tf.delay}}; }

dynamics::TransferFunction json_tf(const json& j) {
  return {j.at("num").get<Poly>(), j.at("den").get<Poly>(), j.value("delay", 0.0)};
}

json anomaly_json(const dynamics::AnomalyEvent& a) {
  json j = {{"id", a.id}, {"t_a", a.t_a}, {"severity", a.severity}, {"color", a.color}};
  if (const auto* loe = std::get_if<dynamics::LossOfEffectiveness>(&a.kind)) {
    j["kind"] = "loss_of_effectiveness";
    j["lambda"] = vec_json(loe->lambda);
  } else {
    j["kind"] = "dynamics_switch";
    j["target"] = tf_json(std::get<dynamics::DynamicsSwitch>(a.kind).target);
  }
  return j;
}

dynamics::AnomalyEvent json_anomaly(const json& j) {
  dynamics::AnomalyEvent a;
  a.id = j.at("id").get<int>();
  a.t_a = j.at("t_a").get<double>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "loss_of_effectiveness") {
    a = dynamics::make_loe_event(a.id, a.t_a, json_vec(j.at("lambda")));
  } else if (kind == "dynamics_switch") {
    a = dynamics::make_switch_event(a.id, a.t_a, json_tf(j.at("target")), j.value("severity", std::string("custom")));
  } else {
    throw ConfigError("unknown anomaly kind '" + kind + "'");
  }
  if (j.contains("severity")) a.severity = j.at("severity").get<std::string>();
  if (j.contains("color")) a.color = j.at("color").get<std::string>();
  return a;
}

json windows_json(const std::vector<std::array<double, 2>>& w) {
  json out = json::array();
  for (const auto& p : w) out.push_back({p[0], p[1]});
  return out;
}

std::vector<std::array<double, 2>> json_windows(const json& j) {
  std::vector<std::array<double, 2>> out;
  for (const auto& p : j) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return out;
}

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<double> json_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

json to_json(const ScenarioConfig& c) {
  json plant;
  if (c.plant.kind == PlantKind::transfer_function) {
    plant = {{"kind", "transfer_function"}, {"tf", tf_json(c.plant.tf)}};
  } else {
    plant = {{"kind", "state_space"},
             {"A", mat_json(c.plant.A)},
             {"B", mat_json(c.plant.B)},
             {"C", mat_json(c.plant.C)},
             {"x0", vec_json(c.plant.x0)},
             {"d", vec_json(c.plant.d)},
             {"Phi", mat_json(c.plant.Phi)},
             {"regressor", dynamics::to_string(c.plant.regressor)}};
  }
  json actuator = {{"u_max", vec_json(c.actuator.u_max)},
                   {"rate_max", c.actuator.rate_max ? vec_json(*c.actuator.rate_max) : json(nullptr)}};
  const auto& ap = c.autopilot;
  json autopilot = {{"kind", to_string(ap.kind)},
                    {"pd", {{"zeta", ap.pd_zeta}, {"omega", ap.pd_omega}, {"K_p", opt(ap.pd_K_p)}, {"K_r", opt(ap.pd_K_r)}}},
                    {"mu", ap.mu},
                    {"mu_from_pilot", ap.mu_from_pilot},
                    {"delta", ap.delta},
                    {"ell", ap.ell},
                    {"gamma", ap.gamma},
                    {"Q", mat_json(ap.Q)},
                    {"Q_lqr", mat_json(ap.Q_lqr)},
                    {"R_lqr", mat_json(ap.R_lqr)}};
  const auto& s1 = c.pilot.sca1;
  json mu_table = json::object();
  for (const auto& [k, v] : c.pilot.policy.mu_table) mu_table[k] = v;
  json pilot = {{"kind", to_string(c.pilot.kind)},
                {"crossover",
                 {{"omega_c", s1.manual.crossover.omega_c},
                  {"tau_e", s1.manual.crossover.tau_e},
                  {"lowpass_factor", s1.manual.crossover.lowpass_factor},
                  {"adaptation_tau", s1.manual.adaptation_tau},
                  {"remnant_std", s1.manual.remnant_std},
                  {"remnant_bandwidth", s1.manual.remnant_bandwidth},
                  {"reaction_time", s1.reaction_time},
                  {"discovery_latency", s1.discovery_latency},
                  {"tau_e_jitter", s1.tau_e_jitter}}},
                {"supervisory",
                 {{"variant", pilot::to_string(c.pilot.policy.variant)},
                  {"mu_table", mu_table},
                  {"reaction_delay", c.pilot.policy.reaction_delay},
                  {"reaction_jitter", c.pilot.policy.reaction_jitter}}},
                {"lambda_error", c.pilot.lambda_error}};
  json anomalies = json::array();
  for (const auto& a : c.anomalies) anomalies.push_back(anomaly_json(a));
  json channels = json::array();
  for (const auto& ch : c.command.channels) {
    json sines = json::array();
    for (const auto& s : ch.sines) sines.push_back({{"omega", s.omega}, {"amplitude", s.amplitude}, {"phase", s.phase}});
    channels.push_back({{"offset", ch.offset}, {"sines", sines}, {"points", windows_json(ch.points)}});
  }
  json perception = {{"warmup", c.perception.warmup}, {"calibration_duration", c.perception.calibration_duration}};
  perception["calibration"] = c.perception.calibration
                                  ? json{{"mu_p", c.perception.calibration->mu_p},
                                         {"sigma_p", c.perception.calibration->sigma_p}}
                                  : json(nullptr);
  return {{"name", c.name},
          {"family", c.family},
          {"scenario", c.scenario},
          {"label", c.label},
          {"duration", c.duration},
          {"dt", c.dt},
          {"seed", c.seed},
          {"plant", plant},
          {"actuator", actuator},
          {"autopilot", autopilot},
          {"pilot", pilot},
          {"anomalies", anomalies},
          {"alert", {{"policy", to_string(c.alert.policy)}, {"delta_t", c.alert.delta_t}}},
          {"perception", perception},
          {"training", {{"randomize", c.training.randomize}, {"windows", windows_json(c.training.windows)}}},
          {"command", {{"channels", channels}}},
          {"metrics", {{"delta", c.metrics_delta}}},
          {"output_names", c.output_names}};
}

ScenarioConfig config_from_json(const json& j) {
  try {
    ScenarioConfig c;
    c.name = j.value("name", std::string());
    c.family = j.at("family").get<std::string>();
    c.scenario = j.value("scenario", c.name);
    c.label = j.value("label", std::string());
    c.duration = j.at("duration").get<double>();
    c.dt = j.value("dt", 0.01);
    c.seed = j.value("seed", std::uint64_t{0});

    const auto& p = j.at("plant");
    const auto pk = p.at("kind").get<std::string>();
    if (pk == "transfer_function") {
      c.plant.kind = PlantKind::transfer_function;
      c.plant.tf = json_tf(p.at("tf"));
    } else if (pk == "state_space") {
      c.plant.kind = PlantKind::state_space;
      c.plant.A = json_mat(p.at("A"));
      c.plant.B = json_mat(p.at("B"));
      c.plant.C = json_mat(p.at("C"));
      c.plant.x0 = p.contains("x0") ? json_vec(p.at("x0")) : Vec(Vec::Zero(c.plant.A.rows()));
      c.plant.d = p.contains("d") ? json_vec(p.at("d")) : Vec();
      c.plant.Phi = p.contains("Phi") ? json_mat(p.at("Phi")) : Mat();
      c.plant.regressor = dynamics::regressor_from_string(p.value("regressor", std::string("none")));
    } else {
      throw ConfigError("unknown plant kind '" + pk + "'");
    }

    const auto& act = j.at("actuator");
    c.actuator.u_max = json_vec(act.at("u_max"));
    if (act.contains("rate_max") && !act.at("rate_max").is_null()) c.actuator.rate_max = json_vec(act.at("rate_max"));

    const auto& ap = j.at("autopilot");
    c.autopilot.kind = autopilot_spec_from_string(ap.at("kind").get<std::string>());
    if (ap.contains("pd")) {
      const auto& pd = ap.at("pd");
      c.autopilot.pd_zeta = pd.value("zeta", 0.7);
      c.autopilot.pd_omega = pd.value("omega", 2.0);
      c.autopilot.pd_K_p = json_opt(pd, "K_p");
      c.autopilot.pd_K_r = json_opt(pd, "K_r");
    }
    c.autopilot.mu = ap.value("mu", 1.0);
    c.autopilot.mu_from_pilot = ap.value("mu_from_pilot", false);
    c.autopilot.delta = ap.value("delta", 0.25);
    c.autopilot.ell = ap.value("ell", 5.0);
    c.autopilot.gamma = ap.value("gamma", 10.0);
    if (ap.contains("Q")) c.autopilot.Q = json_mat(ap.at("Q"));
    if (ap.contains("Q_lqr")) c.autopilot.Q_lqr = json_mat(ap.at("Q_lqr"));
    if (ap.contains("R_lqr")) c.autopilot.R_lqr = json_mat(ap.at("R_lqr"));

    const auto& pl = j.at("pilot");
    c.pilot.kind = pilot_kind_from_string(pl.at("kind").get<std::string>());
    if (pl.contains("crossover")) {
      const auto& x = pl.at("crossover");
      auto& s1 = c.pilot.sca1;
      s1.manual.crossover.omega_c = x.value("omega_c", s1.manual.crossover.omega_c);
      s1.manual.crossover.tau_e = x.value("tau_e", s1.manual.crossover.tau_e);
      s1.manual.crossover.lowpass_factor = x.value("lowpass_factor", s1.manual.crossover.lowpass_factor);
      s1.manual.adaptation_tau = x.value("adaptation_tau", s1.manual.adaptation_tau);
      s1.manual.remnant_std = x.value("remnant_std", s1.manual.remnant_std);
      s1.manual.remnant_bandwidth = x.value("remnant_bandwidth", s1.manual.remnant_bandwidth);
      s1.reaction_time = x.value("reaction_time", s1.reaction_time);
      s1.discovery_latency = x.value("discovery_latency", s1.discovery_latency);
      s1.tau_e_jitter = x.value("tau_e_jitter", s1.tau_e_jitter);
    }
    if (pl.contains("supervisory")) {
      const auto& s = pl.at("supervisory");
      const auto variant = s.value("variant", std::string("sap"));
      c.pilot.policy.variant = variant == "sup" ? pilot::SupervisoryVariant::sup : pilot::SupervisoryVariant::sap;
      if (s.contains("mu_table"))
        for (const auto& [k, v] : s.at("mu_table").items()) c.pilot.policy.mu_table[k] = v.get<int>();
      c.pilot.policy.reaction_delay = s.value("reaction_delay", 1.0);
      c.pilot.policy.reaction_jitter = s.value("reaction_jitter", 0.0);
    }
    c.pilot.lambda_error = pl.value("lambda_error", 0.2);

    for (const auto& a : j.at("anomalies")) c.anomalies.push_back(json_anomaly(a));
    if (j.contains("alert")) {
      c.alert.policy = alert_policy_from_string(j.at("alert").value("policy", std::string("none")));
      c.alert.delta_t = j.at("alert").value("delta_t", 0.0);
    }
    if (j.contains("perception")) {
      const auto& pe = j.at("perception");
      c.perception.warmup = pe.value("warmup", 5.0);
      c.perception.calibration_duration = pe.value("calibration_duration", 180.0);
      if (pe.contains("calibration") && !pe.at("calibration").is_null())
        c.perception.calibration = pilot::PerceptionCalibration{pe.at("calibration").at("mu_p").get<double>(),
                                                                pe.at("calibration").at("sigma_p").get<double>()};
    }
    if (j.contains("training")) {
      c.training.randomize = j.at("training").value("randomize", false);
      if (j.at("training").contains("windows")) c.training.windows = json_windows(j.at("training").at("windows"));
    }
    for (const auto& ch : j.at("command").at("channels")) {
      CommandChannel cc;
      cc.offset = ch.value("offset", 0.0);
      if (ch.contains("sines"))
        for (const auto& s : ch.at("sines"))
          cc.sines.push_back({s.at("omega").get<double>(), s.at("amplitude").get<double>(), s.value("phase", 0.0)});
      if (ch.contains("points")) cc.points = json_windows(ch.at("points"));
      c.command.channels.push_back(cc);
    }
    if (j.contains("metrics")) c.metrics_delta = j.at("metrics").value("delta", 0.25);
    if (j.contains("output_names")) c.output_names = j.at("output_names").get<std::vector<std::string>>();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed scenario config: ") + e.what());
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("malformed scenario config: ") + e.what());
  }
}

bool operator==(const ScenarioConfig& a, const ScenarioConfig& b) { return to_json(a) == to_json(b); }

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(const json& canonical) { return fnv1a64(canonical.dump()); }

std::uint64_t config_hash(const ScenarioConfig& cfg) { return config_hash(to_json(cfg)); }

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse scenario config '" + path + "': " + e.what());
  }
  auto cfg = config_from_json(j);
  cfg.validate();
  return cfg;
}

void save_config(const std::string& path, const ScenarioConfig& cfg) {
  write_file_atomic(path, to_json(cfg).dump(2) + "\n");
}

namespace {

ScenarioConfig sca1_base(Sca1Kind kind) {
  ScenarioConfig c;
  c.family = "sca1";
  c.duration = 180.0;
  c.dt = 0.01;
  c.plant.kind = PlantKind::transfer_function;
  c.actuator.u_max = Vec::Constant(1, 3.0);
  c.autopilot.kind = AutopilotSpecKind::pd;
  c.output_names = {"M"};
  CommandChannel ch;
  const bool harsh = kind == Sca1Kind::harsh;
  const std::array<double, 2> phase = harsh ? std::array<double, 2>{0.0, 2.3} : std::array<double, 2>{1.05, 2.09};
  const double scale = harsh ? 1.0 : 2.0;
  ch.sines = {{0.12, 0.15 * scale, phase[0]}, {0.31, 0.075 * scale, phase[1]}};
  c.command.channels = {ch};
  if (harsh) {
    c.scenario = "sca1-harsh";
    c.plant.tf = {{1.0}, {1.0, 10.0, 0.0}, 0.0};
    c.anomalies = {dynamics::make_switch_event(1, 50.0, {{1.0}, {1.0, 15.0, 50.0, 0.0}, 0.2}, "harsh")};
  } else {
    c.scenario = "sca1-mild";
    c.plant.tf = {{1.0}, {1.0, 7.0, 0.0}, 0.0};
    c.anomalies = {dynamics::make_switch_event(1, 64.0, {{1.0}, {1.0, 16.0, 63.0, 0.0}, 0.18}, "mild")};
  }
  return c;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), ::tolower);
  return s;
}

dynamics::SeverityInfo severity_from_token(const std::string& token) {
  if (auto info = dynamics::severity_for_label(token)) return *info;
  const std::string t = lower(token);
  if (t == "mid" || t == "medium") return *dynamics::severity_for_label("Middle");
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used == token.size())
      if (auto info = dynamics::severity_for_lambda(v)) return *info;
  } catch (const std::exception&) {
  }
  throw ConfigError("unknown severity '" + token + "' (expected Low/Middle/High or 0.30/0.20/0.15)");
}

std::string data_dir() {
  if (const char* env = std::getenv("SCA_DATA_DIR")) return env;
  return SCA_DATA_DIR;
}

}  // namespace

ScenarioConfig build_sca1(Sca1Kind kind, AlertPolicy alert) {
  ScenarioConfig c = sca1_base(kind);
  const bool harsh = kind == Sca1Kind::harsh;
  c.alert.policy = alert;
  switch (alert) {
    case AlertPolicy::none:
      c.alert.delta_t = 0.0;
      c.label = "auto";
      break;
    case AlertPolicy::late:
      c.alert.delta_t = harsh ? 5.5 : 10.0;
      c.label = "late";
      break;
    case AlertPolicy::exact:
      c.alert.delta_t = 0.0;
      c.label = "exact";
      break;
    case AlertPolicy::cfm_based:
      c.alert.delta_t = harsh ? 1.1 : 6.2;
      c.label = "cfm_based";
      break;
  }
  c.pilot.kind = alert == AlertPolicy::none ? PilotKind::none : PilotKind::crossover;
  c.name = c.scenario + "-" + c.label;
  return c;
}

std::map<std::string, int> default_mu_table() {
  const std::string path = data_dir() + "/mu_table.json";
  std::ifstream in(path);
  if (!in) throw ConfigError("mu table not found at '" + path + "' (set SCA_DATA_DIR)");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse '" + path + "': " + e.what());
  }
  std::map<std::string, int> table;
  for (const auto& [k, v] : j.at("mu").items()) table[k] = v.get<int>();
  return table;
}

ScenarioConfig build_sca2(const std::vector<std::string>& severities) {
  if (severities.empty()) throw ConfigError("sca2 needs at least one severity");
  ScenarioConfig c;
  c.family = "sca2";
  c.scenario = "sca2";
  c.duration = 100.0;
  c.dt = 0.01;
  c.output_names = {"h", "V"};
  auto& p = c.plant;
  p.kind = PlantKind::state_space;
  // states: V (10 ft/s), alpha (rad), q (rad/s), theta (rad), h (100 ft); inputs: elevator (deg), throttle (fraction)
  p.A.resize(5, 5);
  p.A << -0.0193, 0.882, -0.0575, -3.217, 0.0,  //
      -0.00254, -1.019, 0.905, 0.0, 0.0,        //
      0.0, 0.8223, -1.0774, 0.0, 0.0,          //
      0.0, 0.0, 1.0, 0.0, 0.0,                 //
      0.0, -5.02, 0.0, 5.02, 0.0;
  p.B.resize(5, 2);
  p.B << 0.01737, 1.0,  //
      -0.00215, 0.0,    //
      -0.1756, 0.0,     //
      0.0, 0.0,         //
      0.0, 0.0;
  p.C.resize(2, 5);
  p.C << 0.0, 0.0, 0.0, 0.0, 1.0,  //
      1.0, 0.0, 0.0, 0.0, 0.0;
  p.x0 = Vec::Zero(5);
  c.actuator.u_max = (Vec(2) << 25.0, 1.0).finished();

  auto& ap = c.autopilot;
  ap.kind = AutopilotSpecKind::mu_mod;
  ap.mu = 1.0;
  ap.mu_from_pilot = true;
  ap.delta = 0.25;
  ap.ell = 5.0;
  ap.gamma = 10.0;
  ap.Q_lqr = Vec((Vec(5) << 1.0, 1.0, 1.0, 1.0, 10.0).finished()).asDiagonal();
  ap.R_lqr = Mat::Identity(2, 2);
  c.metrics_delta = ap.delta;

  CommandChannel h;  // climb and hold
  h.points = {{0.0, 0.0}, {10.0, 0.0}, {25.0, 1.0}, {55.0, 1.0}, {70.0, 2.0}, {100.0, 2.0}};
  CommandChannel v;  // speed change and return
  v.points = {{0.0, 0.0}, {20.0, 0.0}, {35.0, 1.0}, {75.0, 1.0}, {90.0, 0.0}, {100.0, 0.0}};
  c.command.channels = {h, v};

  const std::array<double, 2> times = {32.0, 68.0};
  if (severities.size() > times.size()) throw ConfigError("sca2 supports at most two anomalies");
  for (std::size_t i = 0; i < severities.size(); ++i) {
    const auto info = severity_from_token(severities[i]);
    c.anomalies.push_back(dynamics::make_loe_event(static_cast<int>(i) + 1, times[i], Vec::Constant(2, info.lambda)));
  }
  c.pilot.kind = PilotKind::sap;
  c.pilot.policy.variant = pilot::SupervisoryVariant::sap;
  c.pilot.policy.mu_table = default_mu_table();
  c.pilot.policy.reaction_delay = 1.0;
  c.pilot.lambda_error = 0.2;
  c.label = "sap";
  c.name = c.scenario + "-" + c.label;
  return c;
}

ScenarioConfig build_sca2_performance() {
  auto c = build_sca2({"Middle", "High"});
  c.scenario = "sca2-perf";
  c.name = c.scenario + "-" + c.label;
  return c;
}

ScenarioConfig build_sca2_training(const std::string& severity, bool randomize, std::uint64_t seed) {
  auto c = build_sca2({severity});
  const auto info = severity_from_token(severity);
  c.scenario = "sca2-train-" + lower(info.label == "Middle" ? std::string("mid") : info.label);
  c.training.windows = {{20.0, 60.0}};
  c.training.randomize = randomize;
  if (randomize) randomize_anomaly_times(c, seed);
  c.name = c.scenario + "-" + c.label;
  return c;
}

void randomize_anomaly_times(ScenarioConfig& cfg, std::uint64_t seed) {
  if (cfg.training.windows.size() != cfg.anomalies.size()) throw ConfigError("one training window per anomaly");
  std::mt19937_64 rng(seed);
  double previous = 0.0;
  for (std::size_t i = 0; i < cfg.anomalies.size(); ++i) {
    const auto& w = cfg.training.windows[i];
    const double t = std::uniform_real_distribution<double>(std::max(w[0], previous), std::max(w[1], previous))(rng);
    cfg.anomalies[i].t_a = std::round(t / cfg.dt) * cfg.dt;
    previous = cfg.anomalies[i].t_a;
  }
}

void set_sca2_variant(ScenarioConfig& cfg, const std::string& variant) {
  if (cfg.family != "sca2") throw ConfigError("autopilot variants apply to sca2 scenarios");
  auto& ap = cfg.autopilot;
  if (variant == "sap" || variant == "sup") {
    cfg.pilot.kind = variant == "sap" ? PilotKind::sap : PilotKind::sup;
    cfg.pilot.policy.variant = variant == "sap" ? pilot::SupervisoryVariant::sap : pilot::SupervisoryVariant::sup;
    ap.kind = AutopilotSpecKind::mu_mod;
    ap.mu_from_pilot = true;
    ap.mu = 1.0;
  } else if (variant == "human") {
    cfg.pilot.kind = PilotKind::human;
    ap.kind = AutopilotSpecKind::mu_mod;
    ap.mu_from_pilot = true;
    ap.mu = 1.0;
  } else if (variant == "adaptive" || variant == "mu_mod" || variant == "optimal") {
    cfg.pilot.kind = PilotKind::none;
    ap.kind = autopilot_spec_from_string(variant);
    ap.mu_from_pilot = false;
    ap.mu = 1.0;
  } else {
    throw ConfigError("unknown sca2 variant '" + variant + "'");
  }
  cfg.label = variant;
  cfg.name = cfg.scenario + "-" + cfg.label;
}

void apply_run_options(ScenarioConfig& cfg, const RunOptions& opts) {
  if (cfg.is_sca1()) {
    if (opts.autopilot) throw ConfigError("--autopilot applies to sca2 scenarios");
    auto alert = opts.alert ? alert_policy_from_string(*opts.alert) : cfg.alert.policy;
    PilotKind pilot_kind = opts.pilot ? pilot_kind_from_string(*opts.pilot) : cfg.pilot.kind;
    if (pilot_kind == PilotKind::sap || pilot_kind == PilotKind::sup) throw ConfigError("sca1 pilots: synthetic, human or none");
    if (opts.pilot && pilot_kind == PilotKind::none) {
      if (opts.alert && alert != AlertPolicy::none) throw ConfigError("an alert policy needs a pilot");
      alert = AlertPolicy::none;
    }
    if (!opts.pilot && cfg.pilot.kind == PilotKind::none && alert != AlertPolicy::none) pilot_kind = PilotKind::crossover;
    if (alert == AlertPolicy::none && pilot_kind != PilotKind::none && opts.pilot)
      throw ConfigError("a pilot needs an alert policy (late, exact or cfm_based)");
    if (alert == AlertPolicy::none) pilot_kind = PilotKind::none;
    if (cfg.scenario == "sca1-harsh" || cfg.scenario == "sca1-mild") {
      const auto seed = cfg.seed;
      auto sca1 = cfg.pilot.sca1;
      cfg = build_sca1(cfg.scenario == "sca1-harsh" ? Sca1Kind::harsh : Sca1Kind::mild, alert);
      cfg.seed = seed;
      cfg.pilot.sca1 = sca1;
    } else {
      cfg.alert.policy = alert;
      cfg.label = alert == AlertPolicy::none ? "auto" : to_string(alert);
    }
    cfg.pilot.kind = pilot_kind;
  } else {
    if (opts.alert && alert_policy_from_string(*opts.alert) != AlertPolicy::none)
      throw ConfigError("alert policies apply to sca1 scenarios");
    if (opts.pilot && *opts.pilot != "none") {
      if (opts.autopilot && *opts.autopilot != "mu_mod")
        throw ConfigError("supervisory pilots work through the mu_mod autopilot");
      set_sca2_variant(cfg, *opts.pilot);
    } else if (opts.autopilot) {
      set_sca2_variant(cfg, *opts.autopilot);
    } else if (opts.pilot) {
      set_sca2_variant(cfg, "mu_mod");
    }
  }
  if (opts.seed) cfg.seed = *opts.seed;
  cfg.name = cfg.scenario + "-" + cfg.label;
  cfg.validate();
}

std::vector<std::string> scenario_names() {
  return {"sca1-harsh", "sca1-mild", "sca2-train-low", "sca2-train-mid", "sca2-train-high", "sca2-perf"};
}

ScenarioConfig named_scenario(const std::string& name) {
  for (const auto& [prefix, kind] : {std::pair{std::string("sca1-harsh"), Sca1Kind::harsh},
                                     std::pair{std::string("sca1-mild"), Sca1Kind::mild}}) {
    if (name == prefix) return build_sca1(kind, AlertPolicy::cfm_based);
    if (name.rfind(prefix + "-", 0) == 0) return build_sca1(kind, alert_policy_from_string(name.substr(prefix.size() + 1)));
  }
  if (name == "sca2-train-low") return build_sca2_training("Low", false, 0);
  if (name == "sca2-train-mid") return build_sca2_training("Middle", false, 0);
  if (name == "sca2-train-high") return build_sca2_training("High", false, 0);
  if (name == "sca2-perf") return build_sca2_performance();
  if (name.rfind("sca2-perf-", 0) == 0) {
    auto c = build_sca2_performance();
    set_sca2_variant(c, name.substr(10));
    return c;
  }
  throw ConfigError("unknown scenario '" + name + "'");
}

}  // namespace sca::scenario
