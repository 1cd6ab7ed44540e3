#pragma once

#include "sca/adaptive.hpp"
#include "sca/dynamics.hpp"
#include "sca/runlog.hpp"

#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace sca::pilot {

/// Perception smoothing filter 2.25/(s² + 1.5 s + 2.25).
dynamics::TransferFunction g1_filter();
/// Neuromuscular filter 100/(s² + 14.14 s + 100).
dynamics::TransferFunction neuromuscular_filter();

struct PerceptionCalibration {
  double mu_p = 0.0;
  double sigma_p = 0.0;
};

/// |d/dt min_i c_i| sampled by first differences, skipping the first `warmup`
/// seconds.
std::vector<double> cfm_rate_samples(const std::vector<double>& min_c, double dt, double warmup);

inline constexpr double kMinCalibrationDuration = 180.0;

/// Mean and standard deviation of the CfM rate over a nominal record. Throws
/// CalibrationError when the record is shorter than 180 s or sigma_p is 0.
PerceptionCalibration calibrate_perception(const std::vector<double>& min_c, double dt, double warmup = 5.0);
PerceptionCalibration calibrate_perception(const RunLog& nominal, const Vec& u_max, double warmup = 5.0);

/// Latching perception trigger driven by the standardized CfM rate.
class PerceptionState {
 public:
  PerceptionState(PerceptionCalibration cal, double dt, double warmup = 5.0);

  struct Output {
    int K_t = 0;
    double F0 = 0.0;
    bool fired = false;  // K_t latched on this sample
  };

  /// F = (rate − μ_p)/(3σ_p), F0 = G1[F], K_t = 1 once |F0| >= 1.
  Output step(double cfm_rate, double t);

  /// Feeds the current min_i c_i sample; the rate is formed from the previous
  /// sample and ignored during warm-up.
  Output observe(double min_c, double t);

  int K_t() const { return K_t_; }
  double F0() const { return F0_; }
  std::optional<double> trigger_time() const { return t_trigger_; }
  const PerceptionCalibration& calibration() const { return cal_; }

 private:
  PerceptionCalibration cal_;
  double dt_;
  double warmup_;
  dynamics::TransferFunctionPlant g1_;
  int K_t_ = 0;
  double F0_ = 0.0;
  std::optional<double> t_trigger_;
  std::optional<double> prev_c_;
};

PerceptionState::Output perception_step(PerceptionState& state, double cfm_rate, double t);

enum class AdaptationMode { gain, lead, lag };
std::string to_string(AdaptationMode mode);

struct CrossoverConfig {
  double omega_c = 2.0;
  double tau_e = 0.3;
  double lowpass_factor = 10.0;  // excess zeros roll off at lowpass_factor * ω_c

  void validate() const;
};

/// Proper realization of Y_h = ω_c e^(−τ_e s)/(s Y_p). Excess zeros are
/// rolled into low-pass poles; gain and pilot delay are trimmed so that the
/// crossover relation holds exactly at ω_c.
struct PilotRealization {
  dynamics::TransferFunction Y_h;
  int lowpass_order = 0;
  double gain = 1.0;
  AdaptationMode mode = AdaptationMode::gain;
};

PilotRealization realize_crossover(const dynamics::TransferFunction& Y_p, const CrossoverConfig& cfg);

/// Y_h(jω) Y_p(jω) including both delays.
std::complex<double> open_loop_response(const PilotRealization& pilot, const dynamics::TransferFunction& Y_p,
                                        double omega);

/// Phase margin (degrees) of the loop Y_h Y_p, optionally through G_nm.
double phase_margin_deg(const PilotRealization& pilot, const dynamics::TransferFunction& Y_p, bool with_nm);

struct CrossoverPilotConfig {
  CrossoverConfig crossover;
  double adaptation_tau = 2.0;      // blend time constant nominal → adapted
  double remnant_std = 0.3;         // stationary std of the output remnant
  double remnant_bandwidth = 2.0;   // rad/s
};

/// Manual-control pilot: nominal and adapted compensators run in parallel on
/// the displayed error and are blended, followed by G_nm; an Ornstein-Uhlenbeck
/// remnant is added at the compensator output.
class CrossoverPilot {
 public:
  CrossoverPilot(const dynamics::TransferFunction& nominal_plant, const dynamics::TransferFunction& adapted_plant,
                 CrossoverPilotConfig cfg, double dt, std::uint64_t seed);

  /// Adapted compensation is used from the first step.
  void set_adapted() { adapt_start_ = -1e300; }
  /// The blend starts rising at time t.
  void begin_adaptation(double t) { adapt_start_ = t; }
  double blend(double t) const;

  /// Stick command for the displayed error e_display at time t.
  double step(double e_display, double t);

  const PilotRealization& nominal() const { return nominal_; }
  const PilotRealization& adapted() const { return adapted_; }

 private:
  CrossoverPilotConfig cfg_;
  double dt_;
  PilotRealization nominal_;
  PilotRealization adapted_;
  dynamics::TransferFunctionPlant nominal_tf_;
  dynamics::TransferFunctionPlant adapted_tf_;
  dynamics::TransferFunctionPlant nm_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  double remnant_ = 0.0;
  double adapt_start_ = 1e300;
};

/// Single-call form used by tests: advances the pilot one step.
double crossover_control(CrossoverPilot& pilot, double e_display, double t);

enum class SupervisoryVariant { sap, sup };
std::string to_string(SupervisoryVariant v);

struct SupervisoryPolicy {
  SupervisoryVariant variant = SupervisoryVariant::sap;
  std::map<std::string, int> mu_table;  // severity label → μ
  double reaction_delay = 1.0;
  double reaction_jitter = 0.0;  // uniform ± jitter added to the delay

  void validate() const;
};

struct SupervisoryDecision {
  adaptive::PilotDirectives directives;
  double emit_time = 0.0;
};

/// μ from the severity table and, for SAP, the table λ as the severity
/// estimate; emitted at t_a plus the reaction delay.
SupervisoryDecision supervisory_decide(const SupervisoryPolicy& policy, const dynamics::AnomalyEvent& event,
                                       std::uint64_t seed);

/// Adds an error of the given magnitude with a random sign; a result outside
/// (0, 1] takes the opposite sign instead.
Vec inject_severity_error(const Vec& lambda, double magnitude, std::mt19937_64& rng);

/// What a pilot sees at a step boundary.
struct PilotObservation {
  long step = 0;
  double t = 0.0;
  double e_display = 0.0;
  std::optional<double> alert_time;
  int K_t = 0;
  std::vector<dynamics::AnomalyEvent> announced;  // anomalies announced so far
};

struct PilotAction {
  bool take_over = false;
  double take_over_received_at = 0.0;
  std::optional<double> stick;
  std::optional<adaptive::PilotDirectives> directives;
  std::optional<std::string> severity_label;
  std::vector<EventRecord> events;  // decisions to record in the run log
};

class PilotAgent {
 public:
  virtual ~PilotAgent() = default;
  virtual PilotAction act(const PilotObservation& obs) = 0;
  virtual std::string kind() const = 0;
};

struct Sca1PilotConfig {
  CrossoverPilotConfig manual;
  double reaction_time = 1.0;
  double discovery_latency = 5.0;  // in-loop time to notice the change when not perceived beforehand
  double tau_e_jitter = 0.05;      // per-seed increase of τ_e drawn from [0, jitter]
};

/// Synthetic pilot for the trading architecture: takes over one reaction time
/// after the alert and flies the crossover model. A pilot who has perceived
/// the anomaly before taking over flies the adapted compensation at once;
/// otherwise the nominal one until the discovery latency has elapsed.
class SyntheticSca1Pilot : public PilotAgent {
 public:
  SyntheticSca1Pilot(const dynamics::TransferFunction& nominal_plant, const dynamics::TransferFunction& adapted_plant,
                     Sca1PilotConfig cfg, double dt, std::uint64_t seed);
  PilotAction act(const PilotObservation& obs) override;
  std::string kind() const override { return "crossover"; }

  bool in_control() const { return in_control_; }
  bool informed() const { return informed_; }
  const CrossoverPilot& manual() const { return manual_; }

 private:
  Sca1PilotConfig cfg_;
  CrossoverPilot manual_;
  bool in_control_ = false;
  bool informed_ = false;
};

/// Scripted SAP/SUP supervisor.
class SyntheticSupervisor : public PilotAgent {
 public:
  SyntheticSupervisor(SupervisoryPolicy policy, double lambda_error, std::uint64_t seed);
  PilotAction act(const PilotObservation& obs) override;
  std::string kind() const override { return to_string(policy_.variant); }

 private:
  SupervisoryPolicy policy_;
  double lambda_error_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::vector<int> handled_;
  std::vector<std::pair<int, SupervisoryDecision>> pending_;
};

/// Autopilot only; never acts.
class NoPilot : public PilotAgent {
 public:
  PilotAction act(const PilotObservation&) override { return {}; }
  std::string kind() const override { return "none"; }
};

enum class HumanCommandKind { take_over, stick, mu_input, severity_estimate };
std::string to_string(HumanCommandKind kind);
HumanCommandKind human_command_from_string(const std::string& name);

struct HumanCommand {
  HumanCommandKind kind = HumanCommandKind::stick;
  double value = 0.0;
  std::string label;         // severity label for severity_estimate
  double received_at = 0.0;  // simulation time at ingestion
  std::optional<long> apply_at_step;  // replay: exact step boundary
};

/// Exposes a live (or replayed) human through the PilotAgent interface.
/// Commands are applied at the next step boundary in arrival order.
class HumanAdapter : public PilotAgent {
 public:
  HumanAdapter(bool supervisory, double lambda_error, std::uint64_t seed);

  void push(HumanCommand cmd);
  void set_disconnected(bool value);
  bool disconnected() const;

  PilotAction act(const PilotObservation& obs) override;
  std::string kind() const override { return "human"; }

  /// Reaction time of the accepted take-over relative to the alert.
  std::optional<double> reaction_time() const { return reaction_time_; }

 private:
  mutable std::mutex mutex_;
  std::deque<HumanCommand> queue_;
  bool disconnected_ = false;
  bool supervisory_;
  double lambda_error_;
  std::mt19937_64 rng_;
  bool in_control_ = false;
  double stick_ = 0.0;
  int mu_ = 1;
  std::optional<double> reaction_time_;
};

}  // namespace sca::pilot
