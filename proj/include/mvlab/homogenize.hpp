#pragma once

// One-dimensional periodic homogenization around a stationary density:
// corrector, effective diffusivity with its ellipticity bounds, the
// homogenized heat kernel, and the comparison of the two limiting kernels
// above the phase transition.

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvlab/density.hpp"
#include "mvlab/errors.hpp"
#include "mvlab/fft.hpp"
#include "mvlab/io.hpp"
#include "mvlab/potentials.hpp"
#include "mvlab/special.hpp"
#include "mvlab/stationary.hpp"

namespace mvlab {

enum class DiffusionSource { analytic_bessel, quadrature };

inline const char* to_string(DiffusionSource s) {
  return s == DiffusionSource::analytic_bessel ? "analytic_bessel" : "quadrature";
}

/// Homogenized diffusivity A with beta^{-1} / (Z Z^-) <= A <= beta^{-1}.
struct EffectiveDiffusion {
  double value = 0.0;
  double beta = 1.0;
  double lower_bound = 0.0;
  double upper_bound = 0.0;
  DiffusionSource source = DiffusionSource::quadrature;

  bool within_bounds(double slack = 1e-12) const {
    return lower_bound <= value + slack && value <= upper_bound + slack;
  }
};

/// Psi' and Psi on the density's grid, with \int Psi nu = 0.
struct CorrectorProfile {
  std::vector<double> psi_prime;
  std::vector<double> psi;
  /// nu (1 + Psi'), constant in 1D.
  double flux = 0.0;
};

/// Explicit 1D solution of (nu (1 + Psi'))' = 0: 1 + Psi' = c / nu with
/// c = 1 / \int nu^{-1}, so A = c / beta. When the generating potential U
/// (nu proportional to exp(-beta U)) is given, the lower bound uses
/// Z = \int e^{-beta U}, Z^- = \int e^{beta U}; otherwise the harmonic-mean
/// identity Z Z^- = \int nu^{-1}.
inline std::pair<CorrectorProfile, EffectiveDiffusion> corrector_1d(const DensityField& nu, double beta,
                                                                    const std::optional<CosineSeries>& U = {}) {
  if (!(beta > 0.0)) throw validation_error("beta must be positive");
  if (!(nu.min_value() > 0.0)) throw numerical_error("corrector needs a strictly positive density", nu.min_value());
  const std::size_t n = nu.grid_size();
  double inv_mass = 0.0;
  for (double v : nu.values()) inv_mass += 1.0 / v;
  inv_mass /= static_cast<double>(n);
  const double c = 1.0 / inv_mass;

  CorrectorProfile prof;
  prof.flux = c;
  prof.psi_prime.resize(n);
  for (std::size_t j = 0; j < n; ++j) prof.psi_prime[j] = c / nu.values()[j] - 1.0;
  auto modes = fft::forward(prof.psi_prime);
  modes[0] = 0.0;
  modes.back() = 0.0;
  for (std::size_t k = 1; k + 1 < modes.size(); ++k)
    modes[k] /= std::complex<double>(0.0, two_pi * static_cast<double>(k));
  prof.psi = fft::inverse(modes, n);
  double mean = 0.0;
  for (std::size_t j = 0; j < n; ++j) mean += prof.psi[j] * nu.values()[j];
  mean /= static_cast<double>(n);
  for (auto& p : prof.psi) p -= mean;

  EffectiveDiffusion eff;
  eff.beta = beta;
  eff.value = c / beta;
  eff.upper_bound = 1.0 / beta;
  eff.source = DiffusionSource::quadrature;
  if (U) {
    const auto u = U->sample(n);
    const double umin = *std::min_element(u.begin(), u.end());
    const double umax = *std::max_element(u.begin(), u.end());
    // Shift-free product: Z Z^- = (\int e^{-beta (U - umin)}) (\int e^{beta (U - umax)}) e^{beta (umax - umin)}.
    double z = 0.0, zm = 0.0;
    for (double x : u) {
      z += std::exp(-beta * (x - umin));
      zm += std::exp(beta * (x - umax));
    }
    z /= static_cast<double>(n);
    zm /= static_cast<double>(n);
    eff.lower_bound = (1.0 / beta) / (z * zm * std::exp(beta * (umax - umin)));
  } else {
    eff.lower_bound = (1.0 / beta) / inv_mass;
  }
  return {std::move(prof), eff};
}

/// A = beta^{-1} / I_0(a)^2 for nu proportional to exp(a cos(2 pi x)).
inline EffectiveDiffusion effective_diffusion_from_amplitude(double a, double beta) {
  const double i0 = bessel_I(0, a);
  EffectiveDiffusion e;
  e.value = (1.0 / beta) / (i0 * i0);
  e.beta = beta;
  e.lower_bound = e.value;  // Z Z^- = I_0(a)^2 exactly for this family
  e.upper_bound = 1.0 / beta;
  e.source = DiffusionSource::analytic_bessel;
  return e;
}

/// Fundamental solution of d_t rho = A rho'' from delta_0: variance 2 A t.
inline double heat_kernel(const EffectiveDiffusion& A, double t, double x) {
  if (!(t > 0.0)) throw validation_error("heat kernel needs t > 0");
  const double var = 2.0 * A.value * t;
  return std::exp(-x * x / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
}

enum class LimitRegime {
  /// beta above beta_c(eta): distinct limits.
  non_commuting,
  /// beta at or below beta_c(eta): a unique steady state, limits agree.
  commuting,
  /// eta = 0 above beta = 2: the minimiser is only defined up to translation.
  degenerate_translation_family,
};

inline const char* to_string(LimitRegime r) {
  switch (r) {
    case LimitRegime::non_commuting: return "non_commuting";
    case LimitRegime::commuting: return "commuting";
    case LimitRegime::degenerate_translation_family: return "degenerate_translation_family";
  }
  return "?";
}

struct NonCommutativityReport {
  double eta = 0.0;
  double beta = 0.0;
  double beta_c = 0.0;
  LimitRegime regime = LimitRegime::commuting;
  double a_min = 0.0;
  std::optional<double> a_star;
  std::optional<double> A_min;
  std::optional<double> A_star;
  std::optional<double> relative_gap;
  std::optional<double> kernel_gap_t1;
  std::string note;
};

namespace detail {

// sup_x |K_1(x) - K_2(x)| at t = 1 on a dense symmetric grid.
inline double kernel_sup_gap(const EffectiveDiffusion& a, const EffectiveDiffusion& b) {
  const double width = 12.0 * std::sqrt(2.0 * std::max(a.value, b.value));
  constexpr int points = 20001;
  double gap = 0.0;
  for (int i = 0; i < points; ++i) {
    const double x = -width + 2.0 * width * i / (points - 1);
    gap = std::max(gap, std::abs(heat_kernel(a, 1.0, x) - heat_kernel(b, 1.0, x)));
  }
  return gap;
}

}  // namespace detail

/// Both steady states of V = -eta cos, W = -cos, their effective
/// diffusivities (via corrector_1d on the densities) and the distance
/// between the homogenized kernels at t = 1.
inline NonCommutativityReport non_commutativity_report(double eta, double beta,
                                                       std::size_t grid_size = 1024) {
  NonCommutativityReport r;
  r.eta = eta;
  r.beta = beta;
  r.beta_c = critical_beta(eta);
  const auto roots = amplitude_roots(beta, eta);
  r.a_min = roots.a_min;
  r.a_star = roots.a_star;
  const auto V = CosineSeries::cosine(-eta);
  const auto W = CosineSeries::cosine(-1.0);

  auto effective = [&](double a) {
    const auto nu = DensityField::von_mises(a, grid_size);
    return corrector_1d(nu, beta, mean_field_potential(nu, V, W)).second;
  };

  if (eta == 0.0 && beta > 2.0) {
    r.regime = LimitRegime::degenerate_translation_family;
    r.note = "eta = 0 above beta_c: minimisers form a translation family; add confinement (eta > 0) to select one";
    return r;
  }
  const auto a_min_eff = effective(roots.a_min);
  r.A_min = a_min_eff.value;
  if (!roots.a_star) {
    r.regime = LimitRegime::commuting;
    r.note = "unique steady state: the limits commute";
    return r;
  }
  r.regime = LimitRegime::non_commuting;
  const auto a_star_eff = effective(*roots.a_star);
  r.A_star = a_star_eff.value;
  r.relative_gap = std::abs(*r.A_min - *r.A_star) / *r.A_min;
  r.kernel_gap_t1 = detail::kernel_sup_gap(a_min_eff, a_star_eff);
  r.note = "a_star != -a_min, so the homogenized kernels differ: the limits do not commute";
  return r;
}

inline nlohmann::json to_json(const NonCommutativityReport& r) {
  return nlohmann::json{{"eta", r.eta},
                        {"beta", r.beta},
                        {"beta_c", r.beta_c},
                        {"regime", to_string(r.regime)},
                        {"a_min", r.a_min},
                        {"a_star", io::json_number(r.a_star)},
                        {"A_min", io::json_number(r.A_min)},
                        {"A_star", io::json_number(r.A_star)},
                        {"relative_gap", io::json_number(r.relative_gap)},
                        {"kernel_gap_t1", io::json_number(r.kernel_gap_t1)},
                        {"note", r.note}};
}

}  // namespace mvlab
