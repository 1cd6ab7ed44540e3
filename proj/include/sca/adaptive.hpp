#pragma once

#include "sca/dynamics.hpp"
#include "sca/linalg.hpp"

#include <optional>

namespace sca::adaptive {

/// Closed-loop reference model ẋ_m = A_m x_m + B_m (r0 + K_uᵀ Δu_ad) − L e.
struct ReferenceModel {
  Mat A_m;  // n x n, Hurwitz
  Mat B_m;  // n x k
  Mat L;    // n x n, entries <= 0, A_m + L Hurwitz
  Vec x_m;

  void validate() const;
};

struct LearningRates {
  Mat gamma_x;  // n x n
  Mat gamma_r;  // k x k
  Mat gamma_u;  // m x m
  Mat gamma_d;  // m x m
  Mat gamma_f;  // p x p

  /// Every rate set to scale * I with the given dimensions.
  static LearningRates uniform(int n, int m, int k, int p, double scale);
  void validate() const;
};

/// Adjustable parameters. Shapes follow u_ad = K_xᵀx + K_rᵀr0 + d̂ + Φ̂ᵀf(x):
/// K_x is n x m, K_r is k x m, K_u is m x k (so that B_m K_uᵀ Δu_ad is an
/// n-vector), Φ̂ is p x m.
struct AdaptiveGains {
  Mat K_x;
  Mat K_r;
  Mat K_u;
  Vec d_hat;
  Mat Phi_hat;
  LearningRates rates;
  Mat P;

  void validate() const;
};

struct MuModConfig {
  double mu = 1.0;
  double delta = 0.25;
  Vec u_max;

  /// Virtual limit (1 − δ) u_max.
  Vec u_max_delta() const { return (1.0 - delta) * u_max; }
  void validate() const;
};

/// Supervisory inputs from the pilot in the second architecture.
struct PilotDirectives {
  int mu = 1;
  std::optional<Vec> lambda_hat;  // diagonal of Λ̂_fp, SAP only
  double emitted_at = 0.0;

  void validate() const;
};

inline constexpr int kMinPilotMu = 1;
inline constexpr int kMaxPilotMu = 20;

Vec compute_u_ad(const AdaptiveGains& gains, const Vec& x, const Vec& r0, const Vec& f);

/// Scalar μ-mod shaping; mu may be +infinity (pins the output to the virtual
/// limit).
double mu_mod_limit(double u_ad, double mu, double u_max_delta);
Vec mu_mod_limit(const Vec& u_ad, const MuModConfig& cfg);

/// One RK4 step of the reference model with r0, Δu_ad and e held.
Vec crm_step(const ReferenceModel& ref, const Vec& r0, const Mat& K_u, const Vec& du_ad, const Vec& e,
             double dt);

/// Time derivatives of the adaptive parameters (packaged as gains with the
/// same shapes; rates and P are copied through).
AdaptiveGains gain_derivatives(const AdaptiveGains& gains, const Vec& x, const Vec& r0, const Vec& f,
                               const Vec& du_ad, const Vec& e, const Mat& B, const Mat& B_m);

/// Integrates the adaptive laws over one step with all signals held.
AdaptiveGains update_gains(const AdaptiveGains& gains, const Vec& x, const Vec& r0, const Vec& f,
                           const Vec& du_ad, const Vec& e, const Mat& B, const Mat& B_m, double dt);

/// Solves A_mᵀP + P A_m = −Q. Throws SynthesisError when A_m is not Hurwitz.
Mat solve_lyapunov(const Mat& A_m, const Mat& Q);

/// Stabilizing solution of AᵀP + PA − PBR⁻¹BᵀP + Q = 0.
Mat solve_care(const Mat& A, const Mat& B, const Mat& Q, const Mat& R);

/// LQR state-feedback gain in the K_x convention: u = K_xᵀ x, K_x = −P B R⁻¹.
Mat lqr_gain(const Mat& A, const Mat& B, const Mat& Q, const Mat& R);

struct Matching {
  Mat A_m;
  Mat B_m;
  Mat K_r;  // k x m
  Mat K_u;  // m x k
};

/// Reference model and feedforward gains giving unity DC gain from r0 to the
/// outputs selected by C (k x n).
Matching match_nominal(const Mat& A, const Mat& B, const Mat& K_x0, const Mat& C);

/// Same algebra with B replaced by B Λ̂ and the current K_x.
Matching match_anomaly(const Mat& A, const Mat& B, const Vec& lambda_hat, const Mat& K_x, const Mat& C);

/// Which controller drives the state-space plant.
enum class AutopilotKind { adaptive, mu_mod, optimal };

struct AdaptiveConfig {
  AutopilotKind kind = AutopilotKind::mu_mod;
  double mu = 1.0;  // initial / fixed μ
  double delta = 0.25;
  double ell = 5.0;  // L = −ℓ I
  double gamma = 10.0;
  Mat Q;      // Lyapunov weight; identity when empty
  Mat Q_lqr;  // identity when empty
  Mat R_lqr;  // identity when empty
  Mat C;      // output selection, k x n
};

/// Stateful autopilot for the supervisory architecture. Owns the reference
/// model and adaptive parameters; the plant is stepped by the caller.
class AdaptiveAutopilot {
 public:
  struct Output {
    Vec u_ad;
    Vec u_c;
    Vec u;
    Vec du_ad;
  };

  AdaptiveAutopilot(const dynamics::StateSpacePlant& nominal, const dynamics::ActuatorModel& actuator,
                    AdaptiveConfig cfg);

  /// Control for the current plant state; does not advance anything.
  Output control(const Vec& x, const Vec& r0) const;

  /// Advances the reference model and (unless fixed-gain) the adaptive laws
  /// using the signals of the step that was just applied.
  void advance(const Vec& x, const Vec& r0, const Output& out, double dt);

  void set_mu(double mu);
  double mu() const { return mu_cfg_.mu; }

  /// Re-matches reference model and feedforward gains around B Λ̂; x_m is
  /// carried over unchanged.
  void rematch(const Vec& lambda_hat);

  const ReferenceModel& reference() const { return ref_; }
  const AdaptiveGains& gains() const { return gains_; }
  const Mat& output_selection() const { return cfg_.C; }
  const AdaptiveConfig& config() const { return cfg_; }
  Vec tracked_reference_output() const { return cfg_.C * ref_.x_m; }

 private:
  Mat A_;
  Mat B_;
  dynamics::Regressor regressor_;
  dynamics::ActuatorModel actuator_;
  AdaptiveConfig cfg_;
  MuModConfig mu_cfg_;
  ReferenceModel ref_;
  AdaptiveGains gains_;
  Mat Q_;
};

std::string to_string(AutopilotKind kind);
AutopilotKind autopilot_kind_from_string(const std::string& name);

}  // namespace sca::adaptive
