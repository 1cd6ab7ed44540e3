#include "sca/adaptive.hpp"

#include "sca/errors.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace sca::adaptive {

namespace {

bool symmetric_positive_definite(const Mat& M) {
  if (M.rows() != M.cols() || M.rows() == 0) return false;
  if (!M.isApprox(M.transpose(), 1e-10)) return false;
  Eigen::LLT<Mat> llt(M);
  return llt.info() == Eigen::Success;
}

void require_shape(const Mat& M, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (M.rows() != rows || M.cols() != cols)
    throw ContractViolation(std::string(what) + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                            ", got " + std::to_string(M.rows()) + "x" + std::to_string(M.cols()));
}

std::string fmt_sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

Mat identity_if_empty(const Mat& M, Eigen::Index n) { return M.size() == 0 ? Mat::Identity(n, n) : M; }

}  // namespace

void ReferenceModel::validate() const {
  const auto n = A_m.rows();
  require_shape(A_m, n, n, "reference model A_m");
  require_shape(L, n, n, "reference model L");
  if (B_m.rows() != n) throw ContractViolation("reference model: B_m row count must match A_m");
  if (x_m.size() != n) throw ContractViolation("reference model: x_m must be an n-vector");
  if ((L.array() > 0.0).any()) throw ContractViolation("reference model: L entries must be <= 0");
  if (!is_hurwitz(A_m))
    throw SynthesisError("reference model: A_m is not Hurwitz, eigenvalues " + format_eigenvalues(eigenvalues(A_m)));
  if (!is_hurwitz(A_m + L))
    throw SynthesisError("reference model: A_m + L is not Hurwitz, eigenvalues " +
                         format_eigenvalues(eigenvalues(A_m + L)));
}

LearningRates LearningRates::uniform(int n, int m, int k, int p, double scale) {
  if (!(scale > 0.0)) throw ContractViolation("learning rates: scale must be positive");
  return {scale * Mat::Identity(n, n), scale * Mat::Identity(k, k), scale * Mat::Identity(m, m),
          scale * Mat::Identity(m, m), scale * Mat::Identity(p, p)};
}

void LearningRates::validate() const {
  const std::pair<const Mat*, const char*> all[] = {
      {&gamma_x, "Gamma_x"}, {&gamma_r, "Gamma_r"}, {&gamma_u, "Gamma_u"}, {&gamma_d, "Gamma_d"}};
  for (const auto& [M, name] : all)
    if (!symmetric_positive_definite(*M))
      throw ContractViolation(std::string("learning rate ") + name + " must be symmetric positive definite");
  if (gamma_f.size() > 0 && !symmetric_positive_definite(gamma_f))
    throw ContractViolation("learning rate Gamma_f must be symmetric positive definite");
}

void AdaptiveGains::validate() const {
  const auto n = K_x.rows();
  const auto m = K_x.cols();
  const auto k = K_r.rows();
  require_shape(K_r, k, m, "K_r");
  require_shape(K_u, m, k, "K_u");
  if (d_hat.size() != m) throw ContractViolation("d_hat must be an m-vector");
  if (Phi_hat.cols() != m && Phi_hat.rows() > 0) throw ContractViolation("Phi_hat must be p x m");
  require_shape(rates.gamma_x, n, n, "Gamma_x");
  require_shape(rates.gamma_r, k, k, "Gamma_r");
  require_shape(rates.gamma_u, m, m, "Gamma_u");
  require_shape(rates.gamma_d, m, m, "Gamma_d");
  require_shape(rates.gamma_f, Phi_hat.rows(), Phi_hat.rows(), "Gamma_f");
  rates.validate();
  require_shape(P, n, n, "P");
  if (!symmetric_positive_definite(P)) throw ContractViolation("P must be symmetric positive definite");
}

void MuModConfig::validate() const {
  if (!(mu >= 0.0)) throw ContractViolation("mu-mod: mu must be >= 0");
  if (!(delta >= 0.0 && delta < 1.0)) throw ContractViolation("mu-mod: delta must lie in [0, 1)");
  if (u_max.size() == 0 || (u_max.array() <= 0.0).any())
    throw ContractViolation("mu-mod: u_max must be strictly positive");
}

void PilotDirectives::validate() const {
  if (mu < kMinPilotMu || mu > kMaxPilotMu)
    throw ContractViolation("pilot mu " + std::to_string(mu) + " outside Range [" + std::to_string(kMinPilotMu) +
                            ", " + std::to_string(kMaxPilotMu) + "]");
  if (lambda_hat && ((lambda_hat->array() <= 0.0).any() || (lambda_hat->array() > 1.0).any()))
    throw ContractViolation("pilot severity estimate entries must lie in (0, 1]");
}

Vec compute_u_ad(const AdaptiveGains& gains, const Vec& x, const Vec& r0, const Vec& f) {
  if (x.size() != gains.K_x.rows()) throw ContractViolation("compute_u_ad: state dimension mismatch");
  if (r0.size() != gains.K_r.rows()) throw ContractViolation("compute_u_ad: command dimension mismatch");
  if (f.size() != gains.Phi_hat.rows()) throw ContractViolation("compute_u_ad: regressor dimension mismatch");
  Vec u = gains.K_x.transpose() * x + gains.K_r.transpose() * r0 + gains.d_hat;
  if (f.size() > 0) u += gains.Phi_hat.transpose() * f;
  return u;
}

double mu_mod_limit(double u_ad, double mu, double u_max_delta) {
  if (std::abs(u_ad) <= u_max_delta) return u_ad;
  const double s = std::copysign(u_max_delta, u_ad);
  if (std::isinf(mu)) return s;
  return (u_ad + mu * s) / (1.0 + mu);
}

Vec mu_mod_limit(const Vec& u_ad, const MuModConfig& cfg) {
  cfg.validate();
  if (u_ad.size() != cfg.u_max.size()) throw ContractViolation("mu_mod_limit: channel count mismatch");
  const Vec lim = cfg.u_max_delta();
  Vec u_c(u_ad.size());
  for (Eigen::Index i = 0; i < u_ad.size(); ++i) u_c[i] = mu_mod_limit(u_ad[i], cfg.mu, lim[i]);
  return u_c;
}

Vec crm_step(const ReferenceModel& ref, const Vec& r0, const Mat& K_u, const Vec& du_ad, const Vec& e, double dt) {
  if (!(dt > 0.0)) throw ContractViolation("crm_step: dt must be positive");
  if (r0.size() != ref.B_m.cols()) throw ContractViolation("crm_step: command dimension mismatch");
  if (e.size() != ref.x_m.size()) throw ContractViolation("crm_step: error dimension mismatch");
  require_shape(K_u, du_ad.size(), r0.size(), "crm_step K_u");
  const Vec forcing = ref.B_m * (r0 + K_u.transpose() * du_ad) - ref.L * e;
  Vec next = rk4_step(ref.x_m, dt, [&](const Vec& xm) -> Vec { return ref.A_m * xm + forcing; });
  if (!next.allFinite()) throw SimulationFault("reference model state became non-finite");
  return next;
}

AdaptiveGains gain_derivatives(const AdaptiveGains& gains, const Vec& x, const Vec& r0, const Vec& f,
                               const Vec& du_ad, const Vec& e, const Mat& B, const Mat& B_m) {
  const auto n = gains.K_x.rows();
  if (x.size() != n || e.size() != n) throw ContractViolation("update_gains: state dimension mismatch");
  require_shape(B, n, gains.K_x.cols(), "update_gains B");
  require_shape(B_m, n, gains.K_r.rows(), "update_gains B_m");
  if (du_ad.size() != gains.K_x.cols()) throw ContractViolation("update_gains: input dimension mismatch");

  const Eigen::RowVectorXd ePB = e.transpose() * gains.P * B;
  const Eigen::RowVectorXd ePBm = e.transpose() * gains.P * B_m;
  AdaptiveGains rate = gains;
  rate.K_x = -gains.rates.gamma_x * x * ePB;
  rate.K_r = -gains.rates.gamma_r * r0 * ePB;
  rate.d_hat = -gains.rates.gamma_d * (ePB.transpose());
  rate.Phi_hat = f.size() > 0 ? Mat(-gains.rates.gamma_f * f * ePB) : Mat(gains.Phi_hat.rows(), gains.Phi_hat.cols());
  rate.K_u = gains.rates.gamma_u * du_ad * ePBm;
  return rate;
}

AdaptiveGains update_gains(const AdaptiveGains& gains, const Vec& x, const Vec& r0, const Vec& f, const Vec& du_ad,
                           const Vec& e, const Mat& B, const Mat& B_m, double dt) {
  if (!(dt > 0.0)) throw ContractViolation("update_gains: dt must be positive");
  // With every signal held over the step the laws have constant right-hand
  // sides, so the RK4 stages coincide and the update is exact.
  const AdaptiveGains rate = gain_derivatives(gains, x, r0, f, du_ad, e, B, B_m);
  AdaptiveGains next = gains;
  next.K_x += dt * rate.K_x;
  next.K_r += dt * rate.K_r;
  next.d_hat += dt * rate.d_hat;
  next.K_u += dt * rate.K_u;
  if (next.Phi_hat.size() > 0) next.Phi_hat += dt * rate.Phi_hat;
  if (!next.K_x.allFinite() || !next.K_r.allFinite() || !next.K_u.allFinite() || !next.d_hat.allFinite() ||
      !next.Phi_hat.allFinite())
    throw SimulationFault("adaptive gains became non-finite");
  return next;
}

Mat solve_lyapunov(const Mat& A_m, const Mat& Q) {
  const auto n = A_m.rows();
  require_shape(A_m, n, n, "solve_lyapunov A_m");
  require_shape(Q, n, n, "solve_lyapunov Q");
  if (!is_hurwitz(A_m))
    throw SynthesisError("solve_lyapunov: A_m is not Hurwitz, eigenvalues " + format_eigenvalues(eigenvalues(A_m)));
  // vec(A_mᵀP + P A_m) = (I ⊗ A_mᵀ + A_mᵀ ⊗ I) vec(P), column-major
  const Mat I = Mat::Identity(n, n);
  const Mat At = A_m.transpose();
  Mat K = Mat::Zero(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      K.block(i * n, j * n, n, n) += I(i, j) * At;
      K.block(i * n, j * n, n, n) += At(i, j) * I;
    }
  const Eigen::PartialPivLU<Mat> lu(K);
  const Vec rhs = -Eigen::Map<const Vec>(Q.data(), n * n);
  Vec p = lu.solve(rhs);
  // one step of iterative refinement
  p += lu.solve(rhs - K * p);
  Mat P = Eigen::Map<Mat>(p.data(), n, n);
  P = 0.5 * (P + P.transpose());
  if (!P.allFinite()) throw SynthesisError("solve_lyapunov: solution is not finite");
  return P;
}

Mat solve_care(const Mat& A, const Mat& B, const Mat& Q, const Mat& R) {
  const auto n = A.rows();
  const auto m = B.cols();
  require_shape(A, n, n, "solve_care A");
  require_shape(B, n, m, "solve_care B");
  require_shape(Q, n, n, "solve_care Q");
  require_shape(R, m, m, "solve_care R");
  if (!Q.isApprox(Q.transpose(), 1e-10)) throw ContractViolation("solve_care: Q must be symmetric");
  const Eigen::LLT<Mat> R_llt(R);
  if (R_llt.info() != Eigen::Success || !R.isApprox(R.transpose(), 1e-10))
    throw ContractViolation("solve_care: R must be symmetric positive definite");

  const Mat G = B * R_llt.solve(B.transpose());
  Mat H(2 * n, 2 * n);
  H << A, G, Q, -A.transpose();

  // Matrix sign function by scaled Newton iteration.
  Mat Z = H;
  const double dim = static_cast<double>(2 * n);
  bool converged = false;
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::PartialPivLU<Mat> lu(Z);
    double log_det = 0.0;
    const Mat& LU = lu.matrixLU();
    for (Eigen::Index i = 0; i < LU.rows(); ++i) log_det += std::log(std::abs(LU(i, i)));
    if (!std::isfinite(log_det))
      throw SynthesisError("solve_care: Hamiltonian is singular; (A, B) not stabilizable or (Q, A) not detectable");
    const double c = std::exp(-log_det / dim);
    const Mat Zs = c * Z;
    const Mat next = 0.5 * (Zs + lu.inverse() / c);
    const double change = (next - Z).norm();
    Z = next;
    if (change <= 1e-10 * std::max(1.0, Z.norm())) {
      converged = true;
      break;
    }
  }
  if (!converged) throw SynthesisError("solve_care: sign-function iteration did not converge");

  const Mat I = Mat::Identity(n, n);
  Mat lhs(2 * n, n), rhs(2 * n, n);
  lhs << Z.block(0, n, n, n), Z.block(n, n, n, n) + I;
  rhs << Z.block(0, 0, n, n) + I, Z.block(n, 0, n, n);
  Mat P = lhs.completeOrthogonalDecomposition().solve(rhs);
  P = 0.5 * (P + P.transpose());

  // Newton-Kleinman refinement from the sign-function estimate.
  auto residual = [&](const Mat& X) { return A.transpose() * X + X * A - X * G * X + Q; };
  for (int iter = 0; iter < 20; ++iter) {
    const double res = residual(P).norm();
    if (res <= 1e-12 * std::max(1.0, Q.norm())) break;
    const Mat K = R_llt.solve(B.transpose() * P);
    const Mat Acl = A - B * K;
    if (!is_hurwitz(Acl)) break;
    const Mat next = solve_lyapunov(Acl, Q + K.transpose() * R * K);
    if (residual(next).norm() >= res) break;
    P = next;
  }
  // relative to the size of the terms being balanced
  const double res = residual(P).norm();
  const double scale = std::max(1.0, Q.norm() + 2.0 * (A.transpose() * P).norm() + (P * G * P).norm());
  if (!P.allFinite() || res > 1e-10 * scale)
    throw SynthesisError("solve_care: relative Riccati residual " + fmt_sci(res / scale) + " above tolerance");
  return P;
}

Mat lqr_gain(const Mat& A, const Mat& B, const Mat& Q, const Mat& R) {
  const Mat P = solve_care(A, B, Q, R);
  const Mat K_x = -(P * B * R.inverse());
  const Mat Acl = A + B * K_x.transpose();
  if (!is_hurwitz(Acl))
    throw SynthesisError("lqr_gain: closed loop is not Hurwitz, eigenvalues " + format_eigenvalues(eigenvalues(Acl)));
  return K_x;
}

namespace {

Matching match_with(const Mat& A, const Mat& B_eff, const Mat& K_x, const Mat& C) {
  const auto n = A.rows();
  const auto m = B_eff.cols();
  require_shape(A, n, n, "match A");
  require_shape(K_x, n, m, "match K_x");
  if (C.cols() != n) throw ContractViolation("match: C must have n columns");
  if (C.rows() != m) throw ContractViolation("match: number of commanded outputs must equal number of inputs");
  Matching out;
  out.A_m = A + B_eff * K_x.transpose();
  if (!is_hurwitz(out.A_m))
    throw SynthesisError("match: A + B K_x^T is not Hurwitz, eigenvalues " + format_eigenvalues(eigenvalues(out.A_m)));
  const Mat G = C * out.A_m.partialPivLu().solve(B_eff);
  const Eigen::FullPivLU<Mat> G_lu(G);
  if (!G_lu.isInvertible() || G_lu.rcond() < 1e-12) throw SynthesisError("match: DC-gain matrix C A_m^-1 B is singular");
  const Mat Kr_T = -G_lu.inverse();
  out.K_r = Kr_T.transpose();
  out.B_m = B_eff * Kr_T;
  out.K_u = -G.transpose();
  return out;
}

}  // namespace

Matching match_nominal(const Mat& A, const Mat& B, const Mat& K_x0, const Mat& C) { return match_with(A, B, K_x0, C); }

Matching match_anomaly(const Mat& A, const Mat& B, const Vec& lambda_hat, const Mat& K_x, const Mat& C) {
  if (lambda_hat.size() != B.cols()) throw ContractViolation("match_anomaly: severity estimate dimension mismatch");
  if ((lambda_hat.array() <= 0.0).any() || (lambda_hat.array() > 1.0).any())
    throw ContractViolation("match_anomaly: severity estimate entries must lie in (0, 1]");
  return match_with(A, B * lambda_hat.asDiagonal(), K_x, C);
}

AdaptiveAutopilot::AdaptiveAutopilot(const dynamics::StateSpacePlant& nominal, const dynamics::ActuatorModel& actuator,
                                     AdaptiveConfig cfg)
    : A_(nominal.A), B_(nominal.B), regressor_(nominal.regressor), actuator_(actuator), cfg_(std::move(cfg)) {
  nominal.validate();
  actuator_.validate();
  const auto n = A_.rows();
  const auto m = B_.cols();
  if (actuator_.channels() != m) throw ContractViolation("autopilot: actuator channel count mismatch");
  if (cfg_.C.size() == 0) throw ContractViolation("autopilot: output selection C is required");
  if (!(cfg_.ell > 0.0)) throw ContractViolation("autopilot: ell must be positive");
  if (!(cfg_.gamma > 0.0)) throw ContractViolation("autopilot: gamma must be positive");

  mu_cfg_.mu = cfg_.mu;
  mu_cfg_.delta = cfg_.delta;
  mu_cfg_.u_max = actuator_.u_max;
  mu_cfg_.validate();

  Q_ = identity_if_empty(cfg_.Q, n);
  const Mat K_x0 = lqr_gain(A_, B_, identity_if_empty(cfg_.Q_lqr, n), identity_if_empty(cfg_.R_lqr, m));
  const Matching match = match_nominal(A_, B_, K_x0, cfg_.C);

  ref_.A_m = match.A_m;
  ref_.B_m = match.B_m;
  ref_.L = -cfg_.ell * Mat::Identity(n, n);
  ref_.x_m = nominal.x;
  ref_.validate();

  const int p = regressor_.size(static_cast<int>(n));
  gains_.K_x = K_x0;
  gains_.K_r = match.K_r;
  gains_.K_u = match.K_u;
  gains_.d_hat = Vec::Zero(m);
  gains_.Phi_hat = Mat::Zero(p, m);
  gains_.rates = LearningRates::uniform(static_cast<int>(n), static_cast<int>(m), static_cast<int>(m), p, cfg_.gamma);
  gains_.P = solve_lyapunov(ref_.A_m, Q_);
  gains_.validate();
}

AdaptiveAutopilot::Output AdaptiveAutopilot::control(const Vec& x, const Vec& r0) const {
  Output out;
  out.u_ad = compute_u_ad(gains_, x, r0, regressor_(x));
  out.u_c = cfg_.kind == AutopilotKind::mu_mod ? mu_mod_limit(out.u_ad, mu_cfg_) : out.u_ad;
  out.u = dynamics::saturate(out.u_c, actuator_);
  out.du_ad = out.u - out.u_ad;
  return out;
}

void AdaptiveAutopilot::advance(const Vec& x, const Vec& r0, const Output& out, double dt) {
  const Vec e = x - ref_.x_m;
  const Vec next_xm = crm_step(ref_, r0, gains_.K_u, out.du_ad, e, dt);
  if (cfg_.kind != AutopilotKind::optimal)
    gains_ = update_gains(gains_, x, r0, regressor_(x), out.du_ad, e, B_, ref_.B_m, dt);
  ref_.x_m = next_xm;
}

void AdaptiveAutopilot::set_mu(double mu) {
  if (!(mu >= 0.0)) throw ContractViolation("autopilot: mu must be >= 0");
  mu_cfg_.mu = mu;
}

void AdaptiveAutopilot::rematch(const Vec& lambda_hat) {
  const Matching match = match_anomaly(A_, B_, lambda_hat, gains_.K_x, cfg_.C);
  ReferenceModel next = ref_;
  next.A_m = match.A_m;
  next.B_m = match.B_m;
  next.validate();
  gains_.P = solve_lyapunov(next.A_m, Q_);
  gains_.K_r = match.K_r;
  gains_.K_u = match.K_u;
  ref_ = std::move(next);
}

std::string to_string(AutopilotKind kind) {
  switch (kind) {
    case AutopilotKind::adaptive:
      return "adaptive";
    case AutopilotKind::mu_mod:
      return "mu_mod";
    case AutopilotKind::optimal:
      return "optimal";
  }
  return "adaptive";
}

AutopilotKind autopilot_kind_from_string(const std::string& name) {
  if (name == "adaptive") return AutopilotKind::adaptive;
  if (name == "mu_mod") return AutopilotKind::mu_mod;
  if (name == "optimal") return AutopilotKind::optimal;
  throw ConfigError("unknown autopilot kind '" + name + "'");
}

}  // namespace sca::adaptive
