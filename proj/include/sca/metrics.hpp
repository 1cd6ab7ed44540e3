#pragma once

#include "sca/runlog.hpp"

#include <optional>
#include <vector>

namespace sca::metrics {

/// Sampled signal on a uniform grid starting at t0.
struct Series {
  double t0 = 0.0;
  double dt = 0.01;
  std::vector<double> v;

  double time(std::size_t k) const { return t0 + dt * static_cast<double>(k); }
};

/// Trapezoidal ∫_a^b v(t)² dt over grid samples with a <= t <= b.
/// Throws MetricError when the window holds fewer than two samples.
double integral_of_square(const Series& s, double a, double b);

/// sqrt((1/(b−a)) ∫_a^b v²)
double window_rms(const Series& s, double a, double b);

/// min_i (1 − |u_i|/u_max_i) per step.
std::vector<double> cfm_series(const std::vector<Vec>& u, const Vec& u_max);

struct CfmResult {
  double cfm_r = 0.0;  // rms of min_i c_i over [t_a, T]
  double cfm_d = 0.0;  // max_i δ u_max_i
  double cfm = 0.0;    // cfm_r / cfm_d
};

CfmResult cfm_normalized(const Series& min_c, double t_a, double T, double delta, const Vec& u_max);

/// rms(y_m − r0)/rms(r0) over [a, b]; vectors are compared in the Euclidean norm.
double gcd(const std::vector<Vec>& y_m, const std::vector<Vec>& r0, double t0, double dt, double a, double b);

/// sqrt((1/T_p) ∫_{t_a}^{T_p} e²)
double e_rms(const Series& e, double t_a, double T_p);

struct Rho {
  double verbatim = 0.0;    // 1/(t_a+10) and 1/t_a normalizations
  double normalized = 0.0;  // both windows normalized by their 10 s length
};

Rho bumpless_rho(const Series& e, double t_a, double window = 10.0);

struct Gamma {
  double rmse_minus = 0.0;  // over [0, t_a1]
  double rmse_plus = 0.0;   // over [t_a1, T]
  double gamma = 0.0;
};

Gamma gamma(const Series& e, double t_a1, double T);

/// Reaction times: t_RT from the alert to the take-over, t_TRT = t_RT + ΔT.
struct ReactionTimes {
  double t_rt = 0.0;
  double t_trt = 0.0;
};

ReactionTimes reaction_times(double t_a, double t_s, double t_takeover);

struct MetricsReport {
  std::string family;
  std::string scenario;
  std::string label;
  std::uint64_t seed = 0;
  double e_rms = 0.0;
  double cfm = 0.0;
  double cfm_r = 0.0;
  double min_cfm = 0.0;  // minimum of min_i c_i over the post-anomaly window
  std::optional<double> gcd;
  std::optional<Rho> rho;
  std::vector<Gamma> gamma;  // per commanded output
  std::optional<ReactionTimes> reaction;
  std::optional<double> trigger_time;
  std::optional<double> alert_time;
  double anomaly_time = 0.0;
  bool faulted = false;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  bool operator==(const MetricsReport& other) const;
};

/// Computes the full report from a run log; windows and limits are read from
/// the embedded scenario configuration and the event list.
MetricsReport compute_report(const RunLog& log);

}  // namespace sca::metrics
