#include "sca/metrics.hpp"

#include "sca/errors.hpp"

#include <algorithm>
#include <cmath>

namespace sca::metrics {

namespace {

/// Index range [lo, hi] of grid samples inside [a, b].
std::pair<std::size_t, std::size_t> window_indices(std::size_t n, double t0, double dt, double a, double b) {
  if (!(b > a)) throw MetricError("metric window is empty");
  const double tol = 1e-6 * dt;
  const double lo_f = std::ceil((a - t0 - tol) / dt);
  const double hi_f = std::floor((b - t0 + tol) / dt);
  if (lo_f < 0.0 || hi_f > static_cast<double>(n) - 1.0 || hi_f - lo_f < 1.0)
    throw MetricError("metric window [" + std::to_string(a) + ", " + std::to_string(b) + "] not covered by the log");
  return {static_cast<std::size_t>(lo_f), static_cast<std::size_t>(hi_f)};
}

template <typename F>
double trapezoid(std::size_t lo, std::size_t hi, double dt, F&& f) {
  double acc = 0.5 * (f(lo) + f(hi));
  for (std::size_t k = lo + 1; k < hi; ++k) acc += f(k);
  return acc * dt;
}

}  // namespace

double integral_of_square(const Series& s, double a, double b) {
  const auto [lo, hi] = window_indices(s.v.size(), s.t0, s.dt, a, b);
  return trapezoid(lo, hi, s.dt, [&](std::size_t k) { return s.v[k] * s.v[k]; });
}

double window_rms(const Series& s, double a, double b) { return std::sqrt(integral_of_square(s, a, b) / (b - a)); }

std::vector<double> cfm_series(const std::vector<Vec>& u, const Vec& u_max) {
  if (u_max.size() == 0 || (u_max.array() <= 0.0).any()) throw ContractViolation("cfm_series: u_max must be positive");
  std::vector<double> out;
  out.reserve(u.size());
  for (const Vec& uk : u) {
    if (uk.size() != u_max.size()) throw ContractViolation("cfm_series: channel count mismatch");
    out.push_back((1.0 - uk.cwiseAbs().cwiseQuotient(u_max).array()).minCoeff());
  }
  return out;
}

CfmResult cfm_normalized(const Series& min_c, double t_a, double T, double delta, const Vec& u_max) {
  if (!(delta > 0.0 && delta < 1.0)) throw MetricError("cfm: delta must lie in (0, 1)");
  CfmResult r;
  r.cfm_r = window_rms(min_c, t_a, T);
  r.cfm_d = (delta * u_max).maxCoeff();
  r.cfm = r.cfm_r / r.cfm_d;
  return r;
}

double gcd(const std::vector<Vec>& y_m, const std::vector<Vec>& r0, double t0, double dt, double a, double b) {
  if (y_m.size() != r0.size()) throw MetricError("gcd: series length mismatch");
  const auto [lo, hi] = window_indices(r0.size(), t0, dt, a, b);
  const double num = trapezoid(lo, hi, dt, [&](std::size_t k) {
    if (y_m[k].size() != r0[k].size()) throw MetricError("gcd: reference-model output not aligned with command");
    return (y_m[k] - r0[k]).squaredNorm();
  });
  const double den = trapezoid(lo, hi, dt, [&](std::size_t k) { return r0[k].squaredNorm(); });
  if (!(den > 0.0)) throw MetricError("gcd: command has zero rms over the window");
  return std::sqrt(num / den);
}

double e_rms(const Series& e, double t_a, double T_p) {
  if (!(T_p > 0.0)) throw MetricError("e_rms: T_p must be positive");
  return std::sqrt(integral_of_square(e, t_a, T_p) / T_p);
}

Rho bumpless_rho(const Series& e, double t_a, double window) {
  if (!(t_a > 0.0)) throw MetricError("rho: anomaly time must be positive");
  const double after = integral_of_square(e, t_a, t_a + window);
  const double before = integral_of_square(e, t_a - window, t_a);
  Rho r;
  r.verbatim = std::sqrt(after / (t_a + window)) - std::sqrt(before / t_a);
  r.normalized = std::sqrt(after / window) - std::sqrt(before / window);
  return r;
}

Gamma gamma(const Series& e, double t_a1, double T) {
  if (!(t_a1 > 0.0 && t_a1 < T)) throw MetricError("gamma: anomaly time must lie inside (0, T)");
  Gamma g;
  g.rmse_minus = window_rms(e, 0.0, t_a1);
  g.rmse_plus = window_rms(e, t_a1, T);
  g.gamma = g.rmse_plus - g.rmse_minus;
  return g;
}

ReactionTimes reaction_times(double t_a, double t_s, double t_takeover) {
  if (t_takeover < t_s) throw MetricError("reaction time: take-over precedes the alert");
  return {t_takeover - t_s, (t_takeover - t_s) + (t_s - t_a)};
}

namespace {

nlohmann::json rho_json(const std::optional<Rho>& r) {
  if (!r) return nullptr;
  return {{"verbatim", r->verbatim}, {"normalized", r->normalized}};
}

template <typename T>
nlohmann::json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> opt_double(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json g = nlohmann::json::array();
  for (const auto& x : gamma) g.push_back({{"rmse_minus", x.rmse_minus}, {"rmse_plus", x.rmse_plus}, {"gamma", x.gamma}});
  nlohmann::json rt = nullptr;
  if (reaction) rt = {{"t_rt", reaction->t_rt}, {"t_trt", reaction->t_trt}};
  return {{"family", family},
          {"scenario", scenario},
          {"label", label},
          {"seed", seed},
          {"e_rms", e_rms},
          {"cfm", cfm},
          {"cfm_r", cfm_r},
          {"min_cfm", min_cfm},
          {"gcd", opt_json(gcd)},
          {"rho", rho_json(rho)},
          {"gamma", g},
          {"reaction", rt},
          {"trigger_time", opt_json(trigger_time)},
          {"alert_time", opt_json(alert_time)},
          {"anomaly_time", anomaly_time},
          {"faulted", faulted}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.family = j.at("family").get<std::string>();
  r.scenario = j.value("scenario", std::string());
  r.label = j.at("label").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.e_rms = j.at("e_rms").get<double>();
  r.cfm = j.at("cfm").get<double>();
  r.cfm_r = j.at("cfm_r").get<double>();
  r.min_cfm = j.at("min_cfm").get<double>();
  r.gcd = opt_double(j, "gcd");
  if (!j.at("rho").is_null()) r.rho = Rho{j.at("rho").at("verbatim").get<double>(), j.at("rho").at("normalized").get<double>()};
  for (const auto& g : j.at("gamma"))
    r.gamma.push_back({g.at("rmse_minus").get<double>(), g.at("rmse_plus").get<double>(), g.at("gamma").get<double>()});
  if (!j.at("reaction").is_null())
    r.reaction = ReactionTimes{j.at("reaction").at("t_rt").get<double>(), j.at("reaction").at("t_trt").get<double>()};
  r.trigger_time = opt_double(j, "trigger_time");
  r.alert_time = opt_double(j, "alert_time");
  r.anomaly_time = j.at("anomaly_time").get<double>();
  r.faulted = j.at("faulted").get<bool>();
  return r;
}

bool MetricsReport::operator==(const MetricsReport& o) const { return to_json() == o.to_json(); }

MetricsReport compute_report(const RunLog& log) {
  if (log.steps.size() < 2) throw MetricError("run log holds fewer than two steps");
  const auto& cfg = log.config;
  MetricsReport r;
  r.family = cfg.at("family").get<std::string>();
  r.scenario = cfg.value("scenario", std::string());
  r.label = cfg.value("label", cfg.value("name", std::string()));
  r.seed = log.seed;
  r.faulted = log.faulted;

  const double t0 = log.steps.front().t;
  const double T = log.steps.back().t;
  const double dt = log.dt;
  const auto& anomalies = cfg.at("anomalies");
  if (anomalies.empty()) throw MetricError("report: scenario has no anomaly");
  double t_a = anomalies.at(0).at("t_a").get<double>();
  for (const auto& a : anomalies) t_a = std::min(t_a, a.at("t_a").get<double>());
  r.anomaly_time = t_a;

  const auto u_max_v = cfg.at("actuator").at("u_max").get<std::vector<double>>();
  const Vec u_max = Eigen::Map<const Vec>(u_max_v.data(), static_cast<Eigen::Index>(u_max_v.size()));
  const double delta = cfg.at("metrics").value("delta", 0.25);

  std::vector<Vec> u, y_m, r0;
  u.reserve(log.steps.size());
  for (const auto& s : log.steps) {
    u.push_back(s.u);
    y_m.push_back(s.y_m);
    r0.push_back(s.r0);
  }
  const Series min_c{t0, dt, cfm_series(u, u_max)};
  const auto cfm = cfm_normalized(min_c, t_a, T, delta, u_max);
  r.cfm = cfm.cfm;
  r.cfm_r = cfm.cfm_r;
  const auto [lo, hi] = window_indices(min_c.v.size(), t0, dt, t_a, T);
  r.min_cfm = *std::min_element(min_c.v.begin() + static_cast<long>(lo), min_c.v.begin() + static_cast<long>(hi) + 1);

  const Series e0{t0, dt, log.series(&StepRecord::e, 0)};
  r.e_rms = e_rms(e0, t_a, T);
  const int outputs = static_cast<int>(log.steps.front().e.size());
  for (int i = 0; i < outputs; ++i) r.gamma.push_back(gamma(Series{t0, dt, log.series(&StepRecord::e, i)}, t_a, T));

  if (log.steps.front().y_m.size() > 0) r.gcd = metrics::gcd(y_m, r0, t0, dt, t_a, T);
  if (r.family == "sca1") r.rho = bumpless_rho(e0, t_a);

  if (const auto trig = log.events_of("perception_trigger"); !trig.empty()) r.trigger_time = trig.front()->t;
  const auto alerts = log.events_of("alert");
  if (!alerts.empty()) r.alert_time = alerts.front()->t;
  const auto takeovers = log.events_of("take_over");
  if (!alerts.empty() && !takeovers.empty()) {
    const double received = takeovers.front()->payload.value("received_at", takeovers.front()->t);
    r.reaction = reaction_times(t_a, alerts.front()->t, received);
  }
  return r;
}

}  // namespace sca::metrics
