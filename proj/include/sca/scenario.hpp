#pragma once

#include "sca/adaptive.hpp"
#include "sca/dynamics.hpp"
#include "sca/pilot.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace sca::scenario {

struct Sinusoid {
  double omega = 0.0;
  double amplitude = 0.0;
  double phase = 0.0;
};

/// One commanded output: offset + Σ a sin(ωt + φ) + piecewise-linear profile
/// through (t, value) points (held constant outside the point range).
struct CommandChannel {
  double offset = 0.0;
  std::vector<Sinusoid> sines;
  std::vector<std::array<double, 2>> points;

  double value(double t) const;
  double rate(double t) const;
};

struct CommandProfile {
  std::vector<CommandChannel> channels;

  Vec value(double t) const;
  Vec rate(double t) const;
};

enum class PlantKind { transfer_function, state_space };

struct PlantSpec {
  PlantKind kind = PlantKind::transfer_function;
  dynamics::TransferFunction tf;
  Mat A;
  Mat B;
  Vec x0;
  Vec d;
  Mat Phi;
  dynamics::RegressorKind regressor = dynamics::RegressorKind::none;
  Mat C;  // commanded outputs, k x n
};

enum class AutopilotSpecKind { pd, adaptive, mu_mod, optimal };
std::string to_string(AutopilotSpecKind kind);
AutopilotSpecKind autopilot_spec_from_string(const std::string& name);

struct AutopilotSpec {
  AutopilotSpecKind kind = AutopilotSpecKind::pd;
  // PD synthesis targets, or explicit gains when set
  double pd_zeta = 0.7;
  double pd_omega = 2.0;
  std::optional<double> pd_K_p;
  std::optional<double> pd_K_r;
  // adaptive / μ-mod / optimal
  double mu = 1.0;
  bool mu_from_pilot = false;  // μ-mod: pilot directives set μ
  double delta = 0.25;
  double ell = 5.0;
  double gamma = 10.0;
  Mat Q;
  Mat Q_lqr;
  Mat R_lqr;
};

enum class PilotKind { none, crossover, sap, sup, human };
std::string to_string(PilotKind kind);
PilotKind pilot_kind_from_string(const std::string& name);

struct PilotSpec {
  PilotKind kind = PilotKind::none;
  pilot::Sca1PilotConfig sca1;
  pilot::SupervisoryPolicy policy;
  double lambda_error = 0.2;  // absolute error of the SAP severity estimate
};

enum class AlertPolicy { none, late, exact, cfm_based };
std::string to_string(AlertPolicy policy);
AlertPolicy alert_policy_from_string(const std::string& name);

struct AlertSpec {
  AlertPolicy policy = AlertPolicy::none;
  /// Alert delay after the anomaly. For cfm_based this is the reference
  /// timeline value only; the alert itself follows the perception trigger.
  double delta_t = 0.0;
};

struct PerceptionSpec {
  std::optional<pilot::PerceptionCalibration> calibration;  // computed from a nominal run when absent
  double warmup = 5.0;
  double calibration_duration = 180.0;
};

struct TrainingSpec {
  bool randomize = false;
  std::vector<std::array<double, 2>> windows;  // one [lo, hi] per anomaly
};

struct ScenarioConfig {
  std::string name;
  std::string family;    // "sca1" or "sca2"
  std::string scenario;  // e.g. "sca1-harsh"
  std::string label;     // row label in comparison tables
  double duration = 180.0;
  double dt = 0.01;
  std::uint64_t seed = 0;
  PlantSpec plant;
  dynamics::ActuatorModel actuator;
  AutopilotSpec autopilot;
  PilotSpec pilot;
  std::vector<dynamics::AnomalyEvent> anomalies;
  AlertSpec alert;
  PerceptionSpec perception;
  TrainingSpec training;
  CommandProfile command;
  double metrics_delta = 0.25;
  std::vector<std::string> output_names;

  long steps() const;
  bool is_sca1() const { return family == "sca1"; }
  /// Throws ConfigError with a diagnostic on the first violated rule.
  void validate() const;
};

nlohmann::json to_json(const ScenarioConfig& cfg);
ScenarioConfig config_from_json(const nlohmann::json& j);
bool operator==(const ScenarioConfig& a, const ScenarioConfig& b);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const std::string& bytes);
/// FNV-1a of the canonical (sorted-key, compact) serialization.
std::uint64_t config_hash(const ScenarioConfig& cfg);
std::uint64_t config_hash(const nlohmann::json& canonical);

ScenarioConfig load_config(const std::string& path);
void save_config(const std::string& path, const ScenarioConfig& cfg);

enum class Sca1Kind { harsh, mild };

/// Trading-architecture scenario. `alert` none gives the autopilot-only case.
ScenarioConfig build_sca1(Sca1Kind kind, AlertPolicy alert);

/// Supervisory-architecture scenario with one anomaly per severity label
/// ("Low", "Middle", "High" or λ values "0.30", "0.20", "0.15").
ScenarioConfig build_sca2(const std::vector<std::string>& severities);
/// Performance test: λ = 0.20 at 32 s then 0.15 at 68 s, SAP pilot.
ScenarioConfig build_sca2_performance();
/// Single-anomaly training scenario; anomaly time drawn from the training
/// window with the given seed when randomize is set.
ScenarioConfig build_sca2_training(const std::string& severity, bool randomize, std::uint64_t seed);

/// Applies the pilot / autopilot variant of one comparison row
/// ("sap", "sup", "adaptive", "mu_mod", "optimal").
void set_sca2_variant(ScenarioConfig& cfg, const std::string& variant);

/// Names accepted by named_scenario.
std::vector<std::string> scenario_names();
/// Built-in scenario by name: sca1-harsh, sca1-mild (optionally suffixed with
/// -auto/-late/-exact/-cfm_based), sca2-train-{low,mid,high}, sca2-perf.
ScenarioConfig named_scenario(const std::string& name);

/// Default μ per severity label, loaded from data/mu_table.json when present.
std::map<std::string, int> default_mu_table();

/// Command-line / request overrides applied on top of a scenario.
struct RunOptions {
  std::optional<std::string> pilot;      // sca1: synthetic|crossover|human|none; sca2: sap|sup|human|none
  std::optional<std::string> alert;      // sca1: none|late|exact|cfm_based
  std::optional<std::string> autopilot;  // sca2 baselines: adaptive|mu_mod|optimal
  std::optional<std::uint64_t> seed;
};

/// Applies the overrides, rebuilding label, alert timeline and pilot kind so
/// the result stays consistent. Throws ConfigError on an invalid combination.
void apply_run_options(ScenarioConfig& cfg, const RunOptions& opts);

/// Draws the anomaly times of a training scenario from its windows.
void randomize_anomaly_times(ScenarioConfig& cfg, std::uint64_t seed);

}  // namespace sca::scenario
