#pragma once

#include "sca/linalg.hpp"

#include <complex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace sca::dynamics {

/// Amplitude limits, plus an optional first-order rate clamp.
struct ActuatorModel {
  Vec u_max;
  std::optional<Vec> rate_max;

  int channels() const { return static_cast<int>(u_max.size()); }
  void validate() const;
};

/// Per-channel amplitude saturation. When `limits.rate_max` is set the output
/// is additionally clamped to |u - previous| <= rate_max * dt.
Vec saturate(const Vec& u_c, const ActuatorModel& limits);
Vec saturate(const Vec& u_c, const ActuatorModel& limits, const Vec& previous, double dt);

/// Known state-dependent regressor f(x) feeding the Phi^T f(x) term.
enum class RegressorKind { none, linear, abs_quadratic };

struct Regressor {
  RegressorKind kind = RegressorKind::none;

  /// Output dimension for an n-state plant.
  int size(int n) const { return kind == RegressorKind::none ? 0 : n; }
  Vec operator()(const Vec& x) const;
};

std::string to_string(RegressorKind kind);
RegressorKind regressor_from_string(const std::string& name);

/// ẋ = A x + B Λ_f u + d + Φᵀ f(x), x being deviations from trim.
struct StateSpacePlant {
  Mat A;
  Mat B;
  Vec lambda_f;  // diagonal of Λ_f
  Vec d;
  Mat Phi;  // p x n
  Regressor regressor;
  Vec x;
  std::vector<int> applied_events;

  int states() const { return static_cast<int>(A.rows()); }
  int inputs() const { return static_cast<int>(B.cols()); }
  void validate() const;
  Vec derivative(const Vec& state, const Vec& u) const;

  /// Nominal plant with Λ_f = I, d = 0, no regressor.
  static StateSpacePlant linear(Mat A, Mat B, Vec x0);
};

/// One RK4 step of the saturated-input plant. Throws SimulationFault when the
/// result is not finite.
Vec step_state_space(const StateSpacePlant& plant, const Vec& u, double dt);

/// Rational transfer function num(s)/den(s) with a pure delay.
struct TransferFunction {
  Poly num;
  Poly den;
  double delay = 0.0;

  bool is_proper() const;
  int order() const;
  std::complex<double> frequency_response(double omega) const;
  void validate() const;
};

/// Controllable-canonical realization of a TransferFunction driven through a
/// circular delay buffer of round(delay/dt) samples.
class TransferFunctionPlant {
 public:
  TransferFunctionPlant(TransferFunction tf, double dt);

  /// Advances one step with raw input v; returns the output after the step.
  double step(double v);

  double output() const;
  /// Output derivatives are taken from the realization state, not by
  /// differencing samples.
  double output_derivative(int order = 1) const;

  /// Re-initializes the state so that the output and its first order()-1
  /// derivatives equal `values` (missing entries are treated as zero).
  void set_output_derivatives(const std::vector<double>& values);

  /// Swaps in a new realization. Output derivatives up to the new order are
  /// carried across; the new delay line is primed with the last applied input.
  void switch_dynamics(const TransferFunction& target);

  const TransferFunction& transfer_function() const { return tf_; }
  const Vec& state() const { return x_; }
  double dt() const { return dt_; }
  int delay_samples() const { return static_cast<int>(buffer_.size()); }
  double applied_input() const { return held_; }

  std::vector<int> applied_events;

 private:
  void realize();
  Mat observability(int rows) const;
  std::vector<double> input_terms(int rows, double u) const;

  TransferFunction tf_;
  double dt_;
  Mat A_;
  Vec B_;
  Eigen::RowVectorXd C_;
  double D_ = 0.0;
  Vec x_;
  std::vector<double> buffer_;
  std::size_t head_ = 0;
  double held_ = 0.0;
};

double step_transfer_function(TransferFunctionPlant& plant, double v, double dt);

/// Severity labels and display colors for loss-of-effectiveness anomalies.
struct SeverityInfo {
  double lambda;
  std::string label;
  std::string color;
};

const std::vector<SeverityInfo>& severity_table();
std::optional<SeverityInfo> severity_for_lambda(double lambda);
std::optional<SeverityInfo> severity_for_label(const std::string& label);

struct LossOfEffectiveness {
  Vec lambda;
};

struct DynamicsSwitch {
  TransferFunction target;
};

struct AnomalyEvent {
  int id = 0;
  double t_a = 0.0;
  std::variant<LossOfEffectiveness, DynamicsSwitch> kind;
  std::string severity;
  std::string color;

  void validate() const;
};

/// Loss-of-effectiveness event; severity and color come from the table when λ
/// matches an entry, otherwise "custom"/"gray".
AnomalyEvent make_loe_event(int id, double t_a, const Vec& lambda);
AnomalyEvent make_switch_event(int id, double t_a, TransferFunction target, std::string severity);

void apply_anomaly(StateSpacePlant& plant, const AnomalyEvent& event, double t);
void apply_anomaly(TransferFunctionPlant& plant, const AnomalyEvent& event, double t);

/// Diagonal of Λ_f at time t under a loss-of-effectiveness schedule: identity
/// before the first event, then the λ of the latest event with t_a <= t.
Vec lambda_at(const std::vector<AnomalyEvent>& schedule, int m, double t);

}  // namespace sca::dynamics
