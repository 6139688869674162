#pragma once

// Modified Bessel functions I_0, I_1 with the torus-integral normalisation
//   I_n(y) = \int_0^1 cos(2 pi n x) e^{y cos(2 pi x)} dx,
// and the ratio r0 = I_1 / I_0.

#include <cmath>
#include <cstddef>

#include "mvlab/errors.hpp"
#include "mvlab/potentials.hpp"

namespace mvlab {

inline constexpr double bessel_argument_limit = 700.0;

enum class BesselMethod { series, quadrature };

struct BesselEval {
  int order;
  double argument;
  double value;
  BesselMethod method;
};

namespace detail {

inline void check_bessel_args(int n, double y) {
  if (n != 0 && n != 1) throw validation_error("bessel order must be 0 or 1");
  if (!(std::abs(y) <= bessel_argument_limit)) throw validation_error("bessel argument outside |y| <= 700");
}

}  // namespace detail

/// Ascending series sum_m (y/2)^{2m+n} / (m! (m+n)!), truncated once a term
/// drops below 1e-17 of the partial sum.
inline double bessel_I(int n, double y) {
  detail::check_bessel_args(n, y);
  const double half = 0.5 * y;
  const double q = half * half;
  double term = n == 0 ? 1.0 : half;
  double sum = term;
  for (int m = 1; m < 5000; ++m) {
    term *= q / (static_cast<double>(m) * static_cast<double>(m + n));
    sum += term;
    if (std::abs(term) < 1e-17 * std::abs(sum)) break;
  }
  return sum;
}

/// Trapezoid rule on the defining torus integral. Spectrally accurate for
/// this analytic periodic integrand.
inline double bessel_I_quadrature(int n, double y, std::size_t points = 2048) {
  detail::check_bessel_args(n, y);
  double sum = 0.0;
  for (std::size_t j = 0; j < points; ++j) {
    const double x = static_cast<double>(j) / static_cast<double>(points);
    sum += std::cos(two_pi * n * x) * std::exp(y * std::cos(two_pi * x));
  }
  return sum / static_cast<double>(points);
}

inline BesselEval evaluate_bessel(int n, double y, BesselMethod method = BesselMethod::series) {
  const double v = method == BesselMethod::series ? bessel_I(n, y) : bessel_I_quadrature(n, y);
  return {n, y, v, method};
}

/// r0(a) = I_1(a) / I_0(a). For |a| > 30 the two series are summed with a
/// common running rescale so nothing overflows before the hard cap.
inline double r0(double a) {
  detail::check_bessel_args(0, a);
  if (std::abs(a) <= 30.0) return bessel_I(1, a) / bessel_I(0, a);
  const double half = 0.5 * a;
  const double q = half * half;
  // s_m = (a/2)^{2m} / (m!)^2 are the I_0 terms; I_1 terms are s_m (a/2)/(m+1).
  double s = 1.0;
  double sum0 = 1.0;
  double sum1 = half;
  for (int m = 1; m < 5000; ++m) {
    s *= q / (static_cast<double>(m) * static_cast<double>(m));
    sum0 += s;
    sum1 += s * half / static_cast<double>(m + 1);
    if (s < 1e-17 * sum0) break;
    if (sum0 > 1e250) {
      s *= 1e-250;
      sum0 *= 1e-250;
      sum1 *= 1e-250;
    }
  }
  return sum1 / sum0;
}

/// r0'(a) = 1 - r0(a)/a - r0(a)^2, with r0'(0) = 1/2.
inline double r0_derivative(double a) {
  if (std::abs(a) < 1e-4) return 0.5 - 3.0 * a * a / 16.0;
  const double r = r0(a);
  return 1.0 - r / a - r * r;
}

}  // namespace mvlab
