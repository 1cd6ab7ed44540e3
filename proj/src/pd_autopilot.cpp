#include "sca/pd_autopilot.hpp"

#include "sca/errors.hpp"

#include <cmath>
#include <sstream>

namespace sca::pd {

double pd_control(const PdGains& gains, double M, double M_cmd, double M_dot) {
  return gains.K_p * (M - M_cmd) + gains.K_r * M_dot;
}

PdGains synthesize_pd(const dynamics::TransferFunction& plant, double zeta, double omega) {
  if (!(zeta > 0.0) || !(omega > 0.0)) throw ContractViolation("synthesize_pd: zeta and omega must be positive");
  const Poly den = poly_trim(plant.den);
  const Poly num = poly_trim(plant.num);
  if (den.size() != 3 || den[2] != 0.0 || num.size() != 1 || num[0] == 0.0)
    throw SynthesisError("synthesize_pd: nominal plant must have the form b / (s (s + a))");
  const double a = den[1] / den[0];
  const double b = num[0] / den[0];
  // s² + (a − b K_r) s − b K_p = s² + 2ζω s + ω²
  PdGains g{-omega * omega / b, (a - 2.0 * zeta * omega) / b};
  require_stabilizing(plant, g);
  return g;
}

std::vector<std::complex<double>> closed_loop_roots(const dynamics::TransferFunction& plant, const PdGains& gains) {
  const Poly controller = {gains.K_r, gains.K_p};
  const Poly characteristic = poly_add(plant.den, poly_scale(poly_multiply(plant.num, controller), -1.0));
  return poly_roots(characteristic);
}

void require_stabilizing(const dynamics::TransferFunction& plant, const PdGains& gains) {
  const auto roots = closed_loop_roots(plant, gains);
  bool stable = !roots.empty();
  for (const auto& r : roots) stable = stable && r.real() < 0.0;
  if (!stable) {
    std::ostringstream os;
    os << "PD gains (K_p=" << gains.K_p << ", K_r=" << gains.K_r << ") do not stabilize the plant; roots";
    for (const auto& r : roots) os << " " << r.real() << (r.imag() >= 0 ? "+" : "") << r.imag() << "j";
    throw SynthesisError(os.str());
  }
}

std::complex<double> closed_loop_response(const dynamics::TransferFunction& plant, const PdGains& gains,
                                          double omega) {
  const std::complex<double> s(0.0, omega);
  const std::complex<double> G = poly_eval(plant.num, s) / poly_eval(plant.den, s);
  return -gains.K_p * G / (1.0 - G * (gains.K_p + gains.K_r * s));
}

}  // namespace sca::pd
