#include "sca/dynamics.hpp"

#include "sca/errors.hpp"

#include <algorithm>
#include <cmath>

namespace sca::dynamics {

void ActuatorModel::validate() const {
  if (u_max.size() == 0) throw ContractViolation("actuator: no channels");
  if ((u_max.array() <= 0.0).any() || !u_max.allFinite())
    throw ContractViolation("actuator: amplitude limits must be strictly positive");
  if (rate_max) {
    if (rate_max->size() != u_max.size())
      throw ContractViolation("actuator: rate limit dimension mismatch");
    if ((rate_max->array() <= 0.0).any())
      throw ContractViolation("actuator: rate limits must be strictly positive");
  }
}

Vec saturate(const Vec& u_c, const ActuatorModel& limits) {
  if (u_c.size() != limits.u_max.size())
    throw ContractViolation("saturate: expected " + std::to_string(limits.u_max.size()) +
                            " channels, got " + std::to_string(u_c.size()));
  Vec u(u_c.size());
  for (Eigen::Index i = 0; i < u_c.size(); ++i) {
    const double lim = limits.u_max[i];
    u[i] = std::abs(u_c[i]) <= lim ? u_c[i] : std::copysign(lim, u_c[i]);
  }
  return u;
}

Vec saturate(const Vec& u_c, const ActuatorModel& limits, const Vec& previous, double dt) {
  Vec u = saturate(u_c, limits);
  if (!limits.rate_max) return u;
  if (previous.size() != u.size()) throw ContractViolation("saturate: previous output dimension mismatch");
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double step = (*limits.rate_max)[i] * dt;
    u[i] = previous[i] + std::clamp(u[i] - previous[i], -step, step);
  }
  return u;
}

Vec Regressor::operator()(const Vec& x) const {
  switch (kind) {
    case RegressorKind::none:
      return Vec(0);
    case RegressorKind::linear:
      return x;
    case RegressorKind::abs_quadratic:
      return x.cwiseAbs().cwiseProduct(x);
  }
  return Vec(0);
}

std::string to_string(RegressorKind kind) {
  switch (kind) {
    case RegressorKind::none:
      return "none";
    case RegressorKind::linear:
      return "linear";
    case RegressorKind::abs_quadratic:
      return "abs_quadratic";
  }
  return "none";
}

RegressorKind regressor_from_string(const std::string& name) {
  if (name == "none") return RegressorKind::none;
  if (name == "linear") return RegressorKind::linear;
  if (name == "abs_quadratic") return RegressorKind::abs_quadratic;
  throw ConfigError("unknown regressor '" + name + "'");
}

void StateSpacePlant::validate() const {
  const auto n = A.rows();
  if (A.cols() != n || n == 0) throw ContractViolation("plant: A must be square and non-empty");
  if (B.rows() != n) throw ContractViolation("plant: B row count must match A");
  if (lambda_f.size() != B.cols()) throw ContractViolation("plant: Lambda_f must be m x m");
  if ((lambda_f.array() <= 0.0).any() || (lambda_f.array() > 1.0).any())
    throw ContractViolation("plant: Lambda_f entries must lie in (0, 1]");
  if (d.size() != n) throw ContractViolation("plant: d must be an n-vector");
  if (x.size() != n) throw ContractViolation("plant: state must be an n-vector");
  const int p = regressor.size(static_cast<int>(n));
  if (Phi.rows() != p || (p > 0 && Phi.cols() != n))
    throw ContractViolation("plant: Phi must be p x n for the configured regressor");
}

Vec StateSpacePlant::derivative(const Vec& state, const Vec& u) const {
  Vec dx = A * state + B * lambda_f.asDiagonal() * u + d;
  if (Phi.rows() > 0) dx += Phi.transpose() * regressor(state);
  return dx;
}

StateSpacePlant StateSpacePlant::linear(Mat A, Mat B, Vec x0) {
  StateSpacePlant p;
  const auto n = A.rows();
  const auto m = B.cols();
  p.A = std::move(A);
  p.B = std::move(B);
  p.lambda_f = Vec::Ones(m);
  p.d = Vec::Zero(n);
  p.Phi = Mat(0, n);
  p.x = std::move(x0);
  return p;
}

Vec step_state_space(const StateSpacePlant& plant, const Vec& u, double dt) {
  if (!(dt > 0.0)) throw ContractViolation("step_state_space: dt must be positive");
  if (u.size() != plant.inputs()) throw ContractViolation("step_state_space: input dimension mismatch");
  Vec next = rk4_step(plant.x, dt, [&](const Vec& s) { return plant.derivative(s, u); });
  if (!next.allFinite()) throw SimulationFault("plant state became non-finite");
  return next;
}

bool TransferFunction::is_proper() const { return poly_degree(num) <= poly_degree(den); }

int TransferFunction::order() const { return poly_degree(den); }

std::complex<double> TransferFunction::frequency_response(double omega) const {
  const std::complex<double> s(0.0, omega);
  return poly_eval(num, s) / poly_eval(den, s) * std::exp(-s * delay);
}

void TransferFunction::validate() const {
  if (poly_degree(den) < 0) throw ContractViolation("transfer function: zero denominator");
  if (!is_proper()) throw ContractViolation("transfer function: numerator degree exceeds denominator degree");
  if (!(delay >= 0.0)) throw ContractViolation("transfer function: delay must be non-negative");
}

TransferFunctionPlant::TransferFunctionPlant(TransferFunction tf, double dt) : tf_(std::move(tf)), dt_(dt) {
  if (!(dt > 0.0)) throw ContractViolation("transfer function plant: dt must be positive");
  tf_.validate();
  realize();
  x_ = Vec::Zero(A_.rows());
  buffer_.assign(static_cast<std::size_t>(std::lround(tf_.delay / dt_)), 0.0);
  head_ = 0;
}

void TransferFunctionPlant::realize() {
  const Poly den = poly_trim(tf_.den);
  const int n = static_cast<int>(den.size()) - 1;
  const double lead = den[0];
  Poly a = poly_scale(den, 1.0 / lead);
  Poly b = poly_scale(tf_.num, 1.0 / lead);
  // pad numerator to n+1 coefficients
  Poly num(n + 1, 0.0);
  const Poly bt = poly_trim(b);
  std::copy(bt.begin(), bt.end(), num.end() - static_cast<long>(bt.size()));
  D_ = num[0];
  A_ = Mat::Zero(n, n);
  B_ = Vec::Zero(n);
  C_ = Eigen::RowVectorXd::Zero(n);
  if (n == 0) return;
  for (int i = 0; i + 1 < n; ++i) A_(i, i + 1) = 1.0;
  for (int j = 0; j < n; ++j) A_(n - 1, j) = -a[n - j];
  B_[n - 1] = 1.0;
  // strictly proper remainder num - D*den; coefficient of s^j multiplies z_{j+1}
  for (int j = 0; j < n; ++j) C_[j] = num[n - j] - D_ * a[n - j];
}

double TransferFunctionPlant::step(double v) {
  if (!std::isfinite(v)) throw SimulationFault("transfer function plant: non-finite input");
  double applied = v;
  if (!buffer_.empty()) {
    applied = buffer_[head_];
    buffer_[head_] = v;
    head_ = (head_ + 1) % buffer_.size();
  }
  held_ = applied;
  if (A_.rows() > 0) {
    x_ = rk4_step(x_, dt_, [&](const Vec& s) -> Vec { return A_ * s + B_ * applied; });
    if (!x_.allFinite()) throw SimulationFault("transfer function plant: state became non-finite");
  }
  return output();
}

double TransferFunctionPlant::output() const {
  return (A_.rows() > 0 ? C_.dot(x_) : 0.0) + D_ * held_;
}

double TransferFunctionPlant::output_derivative(int order) const {
  if (order < 0) throw ContractViolation("output_derivative: negative order");
  if (order == 0) return output();
  if (A_.rows() == 0) return 0.0;
  Eigen::RowVectorXd row = C_;
  for (int k = 1; k < order; ++k) row = row * A_;
  return (row * A_).dot(x_) + row.dot(B_) * held_;
}

Mat TransferFunctionPlant::observability(int rows) const {
  const auto n = A_.rows();
  Mat O(rows, n);
  Eigen::RowVectorXd row = C_;
  for (int k = 0; k < rows; ++k) {
    O.row(k) = row;
    row = row * A_;
  }
  return O;
}

std::vector<double> TransferFunctionPlant::input_terms(int rows, double u) const {
  std::vector<double> terms(rows, 0.0);
  if (rows == 0) return terms;
  terms[0] = D_ * u;
  Eigen::RowVectorXd row = C_;
  for (int k = 1; k < rows; ++k) {
    terms[k] = row.dot(B_) * u;
    row = row * A_;
  }
  return terms;
}

void TransferFunctionPlant::set_output_derivatives(const std::vector<double>& values) {
  const int n = static_cast<int>(A_.rows());
  if (n == 0) return;
  Vec target = Vec::Zero(n);
  const std::vector<double> inputs = input_terms(n, held_);
  for (int k = 0; k < n; ++k) target[k] = (k < static_cast<int>(values.size()) ? values[k] : 0.0) - inputs[k];
  x_ = observability(n).completeOrthogonalDecomposition().solve(target);
}

void TransferFunctionPlant::switch_dynamics(const TransferFunction& target) {
  target.validate();
  const int new_order = target.order();
  std::vector<double> derivs(new_order);
  for (int k = 0; k < new_order; ++k) derivs[k] = output_derivative(k);
  const double last = held_;

  tf_ = target;
  realize();
  x_ = Vec::Zero(A_.rows());
  buffer_.assign(static_cast<std::size_t>(std::lround(tf_.delay / dt_)), last);
  head_ = 0;
  held_ = last;
  set_output_derivatives(derivs);
}

double step_transfer_function(TransferFunctionPlant& plant, double v, double dt) {
  if (!(dt > 0.0)) throw ContractViolation("step_transfer_function: dt must be positive");
  if (std::abs(dt - plant.dt()) > 1e-12)
    throw ContractViolation("step_transfer_function: dt differs from the realization step");
  return plant.step(v);
}

const std::vector<SeverityInfo>& severity_table() {
  static const std::vector<SeverityInfo> table = {
      {0.30, "Low", "green"},
      {0.20, "Middle", "violet"},
      {0.15, "High", "purple"},
  };
  return table;
}

std::optional<SeverityInfo> severity_for_lambda(double lambda) {
  for (const auto& entry : severity_table())
    if (std::abs(entry.lambda - lambda) < 1e-9) return entry;
  return std::nullopt;
}

std::optional<SeverityInfo> severity_for_label(const std::string& label) {
  for (const auto& entry : severity_table()) {
    std::string a = entry.label, b = label;
    std::transform(a.begin(), a.end(), a.begin(), ::tolower);
    std::transform(b.begin(), b.end(), b.begin(), ::tolower);
    if (a == b) return entry;
  }
  return std::nullopt;
}

void AnomalyEvent::validate() const {
  if (!(t_a >= 0.0)) throw ContractViolation("anomaly: t_a must be non-negative");
  if (const auto* loe = std::get_if<LossOfEffectiveness>(&kind)) {
    if (loe->lambda.size() == 0) throw ContractViolation("anomaly: empty lambda");
    if ((loe->lambda.array() <= 0.0).any() || (loe->lambda.array() >= 1.0).any())
      throw ContractViolation("anomaly: lambda entries must lie in (0, 1)");
  } else {
    std::get<DynamicsSwitch>(kind).target.validate();
  }
}

AnomalyEvent make_loe_event(int id, double t_a, const Vec& lambda) {
  AnomalyEvent ev;
  ev.id = id;
  ev.t_a = t_a;
  ev.kind = LossOfEffectiveness{lambda};
  const bool uniform = lambda.size() > 0 && (lambda.array() == lambda[0]).all();
  const auto info = uniform ? severity_for_lambda(lambda[0]) : std::nullopt;
  ev.severity = info ? info->label : "custom";
  ev.color = info ? info->color : "gray";
  ev.validate();
  return ev;
}

AnomalyEvent make_switch_event(int id, double t_a, TransferFunction target, std::string severity) {
  AnomalyEvent ev;
  ev.id = id;
  ev.t_a = t_a;
  ev.kind = DynamicsSwitch{std::move(target)};
  ev.severity = std::move(severity);
  ev.color = ev.severity == "harsh" ? "red" : "orange";
  ev.validate();
  return ev;
}

namespace {

void mark_applied(std::vector<int>& applied, const AnomalyEvent& event, double t) {
  if (t + 1e-12 < event.t_a)
    throw ContractViolation("apply_anomaly: simulation time precedes the event time");
  if (std::find(applied.begin(), applied.end(), event.id) != applied.end())
    throw IdempotencyViolation("anomaly event " + std::to_string(event.id) + " already applied");
  applied.push_back(event.id);
}

}  // namespace

void apply_anomaly(StateSpacePlant& plant, const AnomalyEvent& event, double t) {
  const auto* loe = std::get_if<LossOfEffectiveness>(&event.kind);
  if (!loe) throw ContractViolation("apply_anomaly: dynamics switch requires a transfer-function plant");
  if (loe->lambda.size() != plant.inputs()) throw ContractViolation("apply_anomaly: lambda dimension mismatch");
  mark_applied(plant.applied_events, event, t);
  plant.lambda_f = loe->lambda;
}

void apply_anomaly(TransferFunctionPlant& plant, const AnomalyEvent& event, double t) {
  const auto* sw = std::get_if<DynamicsSwitch>(&event.kind);
  if (!sw) throw ContractViolation("apply_anomaly: loss of effectiveness requires a state-space plant");
  mark_applied(plant.applied_events, event, t);
  plant.switch_dynamics(sw->target);
}

Vec lambda_at(const std::vector<AnomalyEvent>& schedule, int m, double t) {
  Vec lambda = Vec::Ones(m);
  double latest = -1.0;
  for (const auto& ev : schedule) {
    const auto* loe = std::get_if<LossOfEffectiveness>(&ev.kind);
    if (!loe || ev.t_a > t || ev.t_a < latest) continue;
    latest = ev.t_a;
    lambda = loe->lambda;
  }
  return lambda;
}

}  // namespace sca::dynamics
