#include "sca/linalg.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace sca;

TEST_CASE("rk4 integrates exponential decay to fourth order") {
  auto run = [](double dt) {
    Vec x = Vec::Constant(1, 1.0);
    const int steps = static_cast<int>(std::lround(2.0 / dt));
    for (int k = 0; k < steps; ++k) x = rk4_step(x, dt, [](const Vec& s) -> Vec { return -1.5 * s; });
    return std::abs(x(0) - std::exp(-3.0));
  };
  const double coarse = run(0.04);
  const double fine = run(0.02);
  CHECK(fine < 1e-7);
  // halving the step shrinks the global error by about 2^4
  CHECK(coarse / fine == doctest::Approx(16.0).epsilon(0.1));
}

TEST_CASE("rk4 is exact for constant derivatives") {
  Vec x(2);
  x << 1.0, -2.0;
  const Vec rate = (Vec(2) << 0.25, 3.0).finished();
  const Vec next = rk4_step(x, 0.1, [&](const Vec&) -> Vec { return rate; });
  CHECK(next(0) == doctest::Approx(1.025).epsilon(1e-15));
  CHECK(next(1) == doctest::Approx(-1.7).epsilon(1e-15));
}

TEST_CASE("spectral abscissa and hurwitz test") {
  Mat A(2, 2);
  A << -1.0, 4.0, 0.0, -0.5;
  CHECK(spectral_abscissa(A) == doctest::Approx(-0.5));
  CHECK(is_hurwitz(A));
  A(1, 1) = 0.0;
  CHECK_FALSE(is_hurwitz(A));
  CHECK(all_finite(A));
  A(0, 0) = std::nan("");
  CHECK_FALSE(all_finite(A));
}

TEST_CASE("polynomial helpers") {
  const Poly a = {1.0, 2.0};       // s + 2
  const Poly b = {1.0, 0.0, -1.0};  // s^2 - 1
  const Poly ab = poly_multiply(a, b);
  REQUIRE(ab.size() == 4);
  CHECK(ab == Poly{1.0, 2.0, -1.0, -2.0});
  CHECK(poly_add(a, b) == Poly{1.0, 1.0, 1.0});
  CHECK(poly_scale(a, 3.0) == Poly{3.0, 6.0});
  CHECK(poly_trim({0.0, 0.0, 1.0, 5.0}) == Poly{1.0, 5.0});
  CHECK(poly_degree({0.0, 3.0}) == 0);
  CHECK(std::abs(poly_eval(b, {0.0, 2.0}) - std::complex<double>(-5.0, 0.0)) < 1e-14);

  auto roots = poly_roots(ab);
  std::vector<double> re;
  for (const auto& r : roots) {
    CHECK(std::abs(r.imag()) < 1e-10);
    re.push_back(r.real());
  }
  std::sort(re.begin(), re.end());
  CHECK(re[0] == doctest::Approx(-2.0));
  CHECK(re[1] == doctest::Approx(-1.0));
  CHECK(re[2] == doctest::Approx(1.0));
}

TEST_CASE("eigenvalue formatting lists every value") {
  Mat A = Mat::Zero(2, 2);
  A << 0.0, 1.0, -1.0, 0.0;
  const std::string text = format_eigenvalues(eigenvalues(A));
  CHECK(text.find('j') != std::string::npos);
}
