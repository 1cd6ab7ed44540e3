#pragma once

#include "sca/dynamics.hpp"

#include <complex>
#include <vector>

namespace sca::pd {

/// u = K_p (M − M_cmd) + K_r Ṁ
struct PdGains {
  double K_p = 0.0;
  double K_r = 0.0;
};

double pd_control(const PdGains& gains, double M, double M_cmd, double M_dot);

/// Gains placing the closed loop of b / (s (s + a)) at
/// s² + 2ζω s + ω². Throws SynthesisError for any other plant structure.
PdGains synthesize_pd(const dynamics::TransferFunction& plant, double zeta, double omega);

/// Closed-loop characteristic roots of the delay-free loop: den − num (K_p + K_r s).
std::vector<std::complex<double>> closed_loop_roots(const dynamics::TransferFunction& plant, const PdGains& gains);

/// Throws SynthesisError (with the roots) unless every closed-loop root lies
/// strictly in the left half plane.
void require_stabilizing(const dynamics::TransferFunction& plant, const PdGains& gains);

/// M(jω)/M_cmd(jω) for the delay-free closed loop.
std::complex<double> closed_loop_response(const dynamics::TransferFunction& plant, const PdGains& gains, double omega);

}  // namespace sca::pd
