#pragma once

#include <Eigen/Dense>

#include <complex>
#include <string>
#include <vector>

namespace sca {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;

/// Classic fourth-order Runge-Kutta step for ẋ = f(x) with all exogenous
/// inputs held over the step.
template <typename State, typename Deriv>
State rk4_step(const State& x, double dt, Deriv&& f) {
  const State k1 = f(x);
  const State k2 = f(State(x + 0.5 * dt * k1));
  const State k3 = f(State(x + 0.5 * dt * k2));
  const State k4 = f(State(x + dt * k3));
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

CVec eigenvalues(const Mat& m);

/// Largest real part of the spectrum.
double spectral_abscissa(const Mat& m);

bool is_hurwitz(const Mat& m);

bool all_finite(const Mat& m);

/// Human-readable eigenvalue list, used in synthesis diagnostics.
std::string format_eigenvalues(const CVec& eig);

// Polynomials are stored as coefficient vectors in descending powers of s.
using Poly = std::vector<double>;

Poly poly_multiply(const Poly& a, const Poly& b);
Poly poly_add(const Poly& a, const Poly& b);
Poly poly_scale(const Poly& a, double k);
/// Drops leading (highest power) coefficients that are exactly zero.
Poly poly_trim(const Poly& a);
int poly_degree(const Poly& a);
std::complex<double> poly_eval(const Poly& p, std::complex<double> s);
/// Roots via companion-matrix eigenvalues.
std::vector<std::complex<double>> poly_roots(const Poly& p);

}  // namespace sca
