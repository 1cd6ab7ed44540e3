#include "sca/linalg.hpp"

#include "sca/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sca {

CVec eigenvalues(const Mat& m) {
  if (m.rows() != m.cols()) throw ContractViolation("eigenvalues: matrix is not square");
  if (m.rows() == 0) return CVec(0);
  Eigen::EigenSolver<Mat> solver(m, /*computeEigenvectors=*/false);
  return solver.eigenvalues();
}

double spectral_abscissa(const Mat& m) {
  const CVec eig = eigenvalues(m);
  double worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < eig.size(); ++i) worst = std::max(worst, eig[i].real());
  return worst;
}

bool is_hurwitz(const Mat& m) { return m.rows() > 0 && spectral_abscissa(m) < 0.0; }

bool all_finite(const Mat& m) { return m.allFinite(); }

std::string format_eigenvalues(const CVec& eig) {
  std::ostringstream os;
  os << "[";
  for (Eigen::Index i = 0; i < eig.size(); ++i) {
    if (i) os << ", ";
    os << eig[i].real();
    if (eig[i].imag() != 0.0) os << (eig[i].imag() > 0 ? "+" : "-") << std::abs(eig[i].imag()) << "j";
  }
  os << "]";
  return os.str();
}

Poly poly_multiply(const Poly& a, const Poly& b) {
  if (a.empty() || b.empty()) return {};
  Poly out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

Poly poly_add(const Poly& a, const Poly& b) {
  const std::size_t n = std::max(a.size(), b.size());
  Poly out(n, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) out[n - a.size() + i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) out[n - b.size() + i] += b[i];
  return out;
}

Poly poly_scale(const Poly& a, double k) {
  Poly out(a);
  for (double& c : out) c *= k;
  return out;
}

Poly poly_trim(const Poly& a) {
  auto first = std::find_if(a.begin(), a.end(), [](double c) { return c != 0.0; });
  if (first == a.end()) return {0.0};
  return Poly(first, a.end());
}

int poly_degree(const Poly& a) {
  const Poly t = poly_trim(a);
  if (t.size() == 1 && t[0] == 0.0) return -1;
  return static_cast<int>(t.size()) - 1;
}

std::complex<double> poly_eval(const Poly& p, std::complex<double> s) {
  std::complex<double> acc = 0.0;
  for (double c : p) acc = acc * s + c;
  return acc;
}

std::vector<std::complex<double>> poly_roots(const Poly& p) {
  const Poly t = poly_trim(p);
  const int n = static_cast<int>(t.size()) - 1;
  if (n <= 0) return {};
  Mat companion = Mat::Zero(n, n);
  for (int j = 0; j < n; ++j) companion(0, j) = -t[j + 1] / t[0];
  for (int i = 1; i < n; ++i) companion(i, i - 1) = 1.0;
  const CVec eig = eigenvalues(companion);
  return {eig.data(), eig.data() + eig.size()};
}

}  // namespace sca
