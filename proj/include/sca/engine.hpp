#pragma once

#include "sca/adaptive.hpp"
#include "sca/pd_autopilot.hpp"
#include "sca/pilot.hpp"
#include "sca/runlog.hpp"
#include "sca/scenario.hpp"

#include <memory>
#include <optional>
#include <string>

namespace sca::engine {

/// Fixed-step closed loop for one scenario. Each call to step() commits one
/// record: anomalies due → alert → measurement → pilot → arbitration →
/// actuator → perception → record → plant/controller advance.
class Engine {
 public:
  /// `calibration` overrides the scenario's perception calibration; when both
  /// are absent an sca1 engine runs the nominal calibration flight itself.
  Engine(scenario::ScenarioConfig cfg, pilot::PilotAgent& pilot,
         std::optional<pilot::PerceptionCalibration> calibration = std::nullopt);

  bool done() const { return faulted_ || step_ > last_step_; }
  long next_step() const { return step_; }
  long last_step() const { return last_step_; }
  double time() const { return static_cast<double>(step_) * cfg_.dt; }

  /// Commits one step and returns its record. On a non-finite state the log is
  /// closed with a fault event and the record of the faulted step is returned.
  const StepRecord& step();
  void run_to_end();

  /// Records an out-of-band event (pause, disconnect) at the next step boundary.
  void note(const std::string& type, nlohmann::json payload = nlohmann::json::object());

  const RunLog& log() const { return log_; }
  RunLog take_log() { return std::move(log_); }
  const scenario::ScenarioConfig& config() const { return cfg_; }
  bool faulted() const { return faulted_; }
  std::string active() const { return active_; }
  double mu() const;
  std::optional<double> alert_time() const { return alert_time_; }
  const std::optional<pilot::PerceptionState>& perception() const { return perception_; }
  const adaptive::AdaptiveAutopilot* autopilot() const { return autopilot_ ? &*autopilot_ : nullptr; }
  const pd::PdGains& pd_gains() const { return pd_; }

 private:
  void add_event(const std::string& type, nlohmann::json payload);
  void apply_due_anomalies(double t);
  StepRecord step_sca1(double t);
  StepRecord step_sca2(double t);
  void fault(const std::string& what);

  scenario::ScenarioConfig cfg_;
  pilot::PilotAgent& pilot_;
  RunLog log_;
  long step_ = 0;
  long last_step_ = 0;
  bool faulted_ = false;
  std::string active_;
  std::vector<bool> applied_;
  std::vector<dynamics::AnomalyEvent> announced_;
  std::optional<double> alert_time_;
  std::optional<pilot::PerceptionState> perception_;
  Vec u_prev_;

  // sca1
  std::optional<dynamics::TransferFunctionPlant> tf_plant_;
  pd::PdGains pd_;

  // sca2
  std::optional<dynamics::StateSpacePlant> ss_plant_;
  std::optional<adaptive::AdaptiveAutopilot> autopilot_;
  Vec lambda_hat_;
};

/// PD gains of an sca1 scenario (explicit or synthesized).
pd::PdGains pd_gains_for(const scenario::ScenarioConfig& cfg);

/// Perception statistics from an anomaly-free, autopilot-only flight of the
/// scenario's nominal plant.
pilot::PerceptionCalibration calibrate(const scenario::ScenarioConfig& cfg);

/// Pilot agent described by the config. Human pilots yield a HumanAdapter.
std::unique_ptr<pilot::PilotAgent> make_pilot(const scenario::ScenarioConfig& cfg);

/// Runs the scenario to completion with the given agent.
RunLog run_scenario(const scenario::ScenarioConfig& cfg, pilot::PilotAgent& agent);
/// Runs the scenario with the agent described by the config.
RunLog run_scenario(const scenario::ScenarioConfig& cfg);

struct ReplayVerdict {
  bool pass = false;
  bool hash_mismatch = false;
  std::optional<long> first_divergent_step;
  std::string message;
};

/// Re-simulates a log from its embedded config and recorded human commands and
/// compares every step record bit for bit.
ReplayVerdict replay(const RunLog& log);

/// Human commands recorded in a log, for replay through a HumanAdapter.
std::vector<pilot::HumanCommand> recorded_commands(const RunLog& log);

}  // namespace sca::engine
