#pragma once

// Test-only reference computations. Nothing here calls into the library's
// distribution code; densities are written out from their textbook formulas.

#include <cmath>
#include <functional>
#include <numbers>

namespace oracle {

inline double normal_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

namespace detail {
inline double simpson(const std::function<double(double)>& f, double a, double fa, double b, double fb, double m,
                      double fm, double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
         simpson(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

/// Adaptive Simpson quadrature on [a, b].
inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-13,
                        int max_depth = 50) {
  const double fa = f(a);
  const double fb = f(b);
  const double m = 0.5 * (a + b);
  const double fm = f(m);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson(f, a, fa, b, fb, m, fm, whole, tol, max_depth);
}

/// Integral of N(mu, sigma^2) over [a, b], split into unit pieces so the
/// adaptive rule sees the peak.
inline double normal_mass(double mu, double sigma, double a, double b, double tol = 1e-14) {
  auto f = [&](double x) { return normal_pdf(x, mu, sigma); };
  double total = 0.0;
  const double step = std::min(1.0, sigma);
  for (double lo = a; lo < b; lo += step) total += integrate(f, lo, std::min(b, lo + step), tol);
  return total;
}

/// Mass of the half-line-truncated normal on the unit cell [L, L+1], by quadrature.
inline double trunc_normal_cell(double mu, double sigma, int L) {
  const double hi = std::max(mu, 0.0) + 40.0 * sigma;
  const double z = normal_mass(mu, sigma, 0.0, hi);
  return normal_mass(mu, sigma, L, L + 1.0) / z;
}

/// Standard normal CDF by quadrature from -12.
inline double std_normal_cdf(double x) { return normal_mass(0.0, 1.0, -12.0, x); }

inline double poisson_pmf(double rate, int k) {
  double p = std::exp(-rate);
  for (int i = 1; i <= k; ++i) p *= rate / i;
  return p;
}

/// Central difference.
inline double derivative(const std::function<double(double)>& f, double x, double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace oracle
