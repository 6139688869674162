#pragma once

// Steady states of the periodic McKean-Vlasov dynamics: the self-consistency
// map, its damped fixed-point solver, the amplitude equation for the tilted
// Kuramoto family, free energy, dissipation and bifurcation scans.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mvlab/density.hpp"
#include "mvlab/errors.hpp"
#include "mvlab/fft.hpp"
#include "mvlab/parallel.hpp"
#include "mvlab/potentials.hpp"
#include "mvlab/special.hpp"

namespace mvlab {

/// U = V + W * nu as a trigonometric series.
inline CosineSeries mean_field_potential(const DensityField& nu, const CosineSeries& V, const CosineSeries& W) {
  return V + convolve(W, nu);
}

/// T(nu) = exp(-beta (V + W * nu)) / Z.
inline DensityField self_consistency_map(const DensityField& nu, const CosineSeries& V, const CosineSeries& W,
                                         double beta) {
  return DensityField::gibbs(mean_field_potential(nu, V, W), beta, nu.grid_size());
}

/// sup-norm of nu - T(nu) on the grid.
inline double consistency_residual(const DensityField& nu, const CosineSeries& V, const CosineSeries& W,
                                   double beta) {
  const auto t = self_consistency_map(nu, V, W, beta);
  double r = 0.0;
  for (std::size_t j = 0; j < nu.grid_size(); ++j) r = std::max(r, std::abs(nu.values()[j] - t.values()[j]));
  return r;
}

/// beta^{-1} \int nu log nu + \int V dnu + (1/2) \int (W * nu) dnu, trapezoid
/// rule on the field's grid, with 0 log 0 = 0.
inline double free_energy(const DensityField& nu, const CosineSeries& V, const CosineSeries& W, double beta) {
  const auto conv = convolve(W, nu);
  const std::size_t n = nu.grid_size();
  double entropy = 0.0, confinement = 0.0, interaction = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double v = nu.values()[j];
    const double x = nu.grid_point(j);
    if (v > 0.0) entropy += v * std::log(v);
    confinement += V.value(x) * v;
    interaction += conv.value(x) * v;
  }
  const double h = 1.0 / static_cast<double>(n);
  return (entropy / beta + confinement + 0.5 * interaction) * h;
}

/// Spectral derivative of grid samples (Nyquist mode dropped).
inline std::vector<double> spectral_derivative(std::span<const double> f) {
  auto m = fft::forward(f);
  for (std::size_t k = 0; k < m.size(); ++k) m[k] *= std::complex<double>(0.0, two_pi * static_cast<double>(k));
  m.back() = 0.0;
  return fft::inverse(m, f.size());
}

/// D(nu) = \int |d/dx log(nu / exp(-beta (W * nu + V)))|^2 nu, evaluated as
/// \int (nu' + beta U' nu)^2 / nu. Samples below 1e-10 max nu are skipped.
inline double dissipation(const DensityField& nu, const CosineSeries& V, const CosineSeries& W, double beta) {
  const std::size_t n = nu.grid_size();
  const double top = nu.max_value();
  if (nu.min_value() < -1e-8 * top) throw numerical_error("dissipation needs a nonnegative density", nu.min_value());
  const auto dnu = spectral_derivative(nu.values());
  const auto U = mean_field_potential(nu, V, W);
  const double floor = 1e-10 * top;
  double d = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double v = nu.values()[j];
    if (v <= floor) continue;
    const double flux = dnu[j] + beta * U.derivative(nu.grid_point(j)) * v;
    d += flux * flux / v;
  }
  return d / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Amplitude equation a = beta (eta + r0(a)) for V = -eta cos, W = -cos.

struct AmplitudeRoots {
  /// Positive root (0 when eta = 0 and beta <= 2).
  double a_min = 0.0;
  /// Most negative root, when one exists (eta > 0 only).
  std::optional<double> a_star;
  /// Every root found, ascending.
  std::vector<double> roots;
};

namespace detail {

inline double amplitude_residual(double a, double beta, double eta) { return beta * (eta + r0(a)) - a; }

// Bisection of a sign change of f on [lo, hi] to full double resolution.
template <typename F>
double bisect(F&& f, double lo, double hi) {
  double flo = f(lo);
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Minimiser of F on a < 0: F is convex there, with F'(a) = beta r0'(a) - 1.
// Returns nullopt when F is monotone on a < 0 (beta <= 2).
inline std::optional<double> amplitude_turning_point(double beta) {
  if (beta <= 2.0) return std::nullopt;
  const double lo = -std::min(beta + 1.0, bessel_argument_limit);
  auto g = [&](double a) { return beta * r0_derivative(a) - 1.0; };
  if (g(lo) > 0.0) throw numerical_error("amplitude turning point beyond the Bessel argument limit", beta);
  return bisect(g, lo, 0.0);
}

}  // namespace detail

/// Roots of F(a) = beta (eta + r0(a)) - a, all of which lie in
/// (beta (eta - 1), beta (eta + 1)). The positive root is bracketed on a
/// geometric grid over (0, beta (1 + eta) + 1]; on a < 0 F is convex, so negative roots exist iff its
/// minimum is negative and are bracketed either side of that minimum.
inline AmplitudeRoots amplitude_roots(double beta, double eta) {
  if (!(beta > 0.0)) throw validation_error("beta must be positive");
  if (!(eta >= 0.0 && eta < 1.0)) throw validation_error("eta must lie in [0, 1)");
  const double bound = beta * (1.0 + eta) + 1.0;
  auto F = [&](double a) { return detail::amplitude_residual(a, beta, eta); };
  AmplitudeRoots out;

  if (eta > 0.0 || beta > 2.0) {
    constexpr int points = 2000;
    const double first = bound * 1e-12;
    double prev_a = eta > 0.0 ? 0.0 : first;
    double prev_f = F(prev_a);
    for (int i = 1; i <= points; ++i) {
      const double a = first * std::pow(bound / first, static_cast<double>(i) / points);
      const double fa = F(a);
      if ((fa > 0.0) != (prev_f > 0.0)) {
        out.a_min = detail::bisect(F, prev_a, a);
        break;
      }
      prev_a = a;
      prev_f = fa;
    }
  }

  if (eta == 0.0) {
    out.roots.push_back(0.0);
    if (out.a_min > 0.0) {
      out.roots.insert(out.roots.begin(), -out.a_min);
      out.roots.push_back(out.a_min);
    }
    return out;
  }

  if (const auto turn = detail::amplitude_turning_point(beta)) {
    const double fmin = F(*turn);
    if (fmin < 0.0) {
      const double outer = detail::bisect(F, -std::min(beta + 1.0, bessel_argument_limit), *turn);
      const double inner = detail::bisect(F, *turn, 0.0);
      out.roots = {outer, inner};
      out.a_star = outer;
    } else if (fmin == 0.0) {
      out.roots = {*turn};
      out.a_star = *turn;
    }
  }
  out.roots.push_back(out.a_min);
  return out;
}

/// True when a second (negative) amplitude exists at (beta, eta).
inline bool has_second_state(double beta, double eta) {
  if (eta == 0.0) return beta > 2.0;
  const auto turn = detail::amplitude_turning_point(beta);
  return turn && detail::amplitude_residual(*turn, beta, eta) < 0.0;
}

/// Smallest beta at which a second steady state appears; exactly 2 for
/// eta = 0, otherwise bisection on has_second_state.
inline double critical_beta(double eta, double tolerance = 1e-10) {
  if (!(eta >= 0.0 && eta < 1.0)) throw validation_error("eta must lie in [0, 1)");
  if (eta == 0.0) return 2.0;
  double lo = 2.0, hi = 4.0;
  while (!has_second_state(hi, eta)) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) throw numerical_error("critical beta above search range", eta);
  }
  while (hi - lo > tolerance * std::max(1.0, lo)) {
    const double mid = 0.5 * (lo + hi);
    (has_second_state(mid, eta) ? hi : lo) = mid;
  }
  return hi;
}

// ---------------------------------------------------------------------------
// General fixed point.

enum class StateKind { uniform, minimiser, nonminimising_critical };

inline const char* to_string(StateKind k) {
  switch (k) {
    case StateKind::uniform: return "uniform";
    case StateKind::minimiser: return "minimiser";
    case StateKind::nonminimising_critical: return "nonminimising_critical";
  }
  return "?";
}

struct StationaryState {
  std::optional<double> amplitude_a;
  double beta = 1.0;
  double eta = 0.0;
  DensityField density;
  StateKind kind = StateKind::uniform;
  double residual = 0.0;
};

/// The single-mode family V = -eta J cos(2 pi x) + c, W = -J cos(2 pi x) + c'
/// with J > 0, 0 <= eta < 1. Its steady states are exp(a cos(2 pi x)) / I_0(a)
/// with a = (beta J) (eta + r0(a)).
struct CosineFamily {
  double coupling = 1.0;  // J
  double eta = 0.0;
};

inline std::optional<CosineFamily> detect_cosine_family(const CosineSeries& V, const CosineSeries& W) {
  if (W.max_mode() != 1 || W.b(1) != 0.0 || !(W.a(1) < 0.0)) return std::nullopt;
  if (V.max_mode() > 1 || V.b(1) != 0.0 || V.a(1) > 0.0) return std::nullopt;
  const double J = -W.a(1);
  const double eta = -V.a(1) / J;
  if (!(eta < 1.0)) return std::nullopt;
  return CosineFamily{J, eta};
}

/// The amplitude-a member of the family as a StationaryState (kind left for
/// the caller to classify).
inline StationaryState amplitude_state(double a, double beta, double eta, const CosineSeries& V,
                                       const CosineSeries& W, std::size_t grid_size = DensityField::default_grid) {
  StationaryState s;
  s.amplitude_a = a;
  s.beta = beta;
  s.eta = eta;
  s.density = DensityField::von_mises(a, grid_size);
  s.residual = consistency_residual(s.density, V, W, beta);
  s.kind = a == 0.0 ? StateKind::uniform : StateKind::minimiser;
  return s;
}

struct SolveOptions {
  /// Mixing weight lambda in (0, 1]; default 1 for beta < 1, else 0.5.
  std::optional<double> damping;
  int max_iter = 20000;
  double tolerance = 1e-10;
};

/// Free energies of every critical point known in closed form at these
/// parameters: the uniform state when V is constant, and the amplitude
/// family when (V, W) belongs to it.
inline std::vector<double> known_critical_energies(const CosineSeries& V, const CosineSeries& W, double beta,
                                                   std::size_t grid_size) {
  std::vector<double> e;
  if (V.is_constant()) e.push_back(free_energy(DensityField::uniform(grid_size), V, W, beta));
  if (const auto fam = detect_cosine_family(V, W)) {
    for (double a : amplitude_roots(beta * fam->coupling, fam->eta).roots) {
      e.push_back(free_energy(DensityField::von_mises(a, grid_size), V, W, beta));
    }
  }
  return e;
}

/// Damped iteration nu <- (1 - lambda) nu + lambda T(nu) until the sup-norm
/// residual drops below tolerance. lambda is halved whenever the residual
/// grows. Throws numerical_error carrying the final residual on failure.
inline StationaryState solve_stationary(const CosineSeries& V, const CosineSeries& W, double beta,
                                        const DensityField& init, const SolveOptions& opt = {}) {
  if (!(beta > 0.0)) throw validation_error("beta must be positive");
  if (!(init.min_value() >= -1e-8)) throw validation_error("initial density is not a valid density");
  double lambda = opt.damping.value_or(beta < 1.0 ? 1.0 : 0.5);
  if (!(lambda > 0.0 && lambda <= 1.0)) throw validation_error("damping must lie in (0, 1]");

  const std::size_t n = init.grid_size();
  DensityField nu = init;
  double residual = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    const auto t = self_consistency_map(nu, V, W, beta);
    double r = 0.0;
    for (std::size_t j = 0; j < n; ++j) r = std::max(r, std::abs(nu.values()[j] - t.values()[j]));
    if (r < opt.tolerance) {
      residual = r;
      break;
    }
    if (r > residual) lambda = std::max(0.5 * lambda, 1e-3);
    residual = r;
    std::vector<double> next(n);
    for (std::size_t j = 0; j < n; ++j) next[j] = (1.0 - lambda) * nu.values()[j] + lambda * t.values()[j];
    nu = DensityField::from_grid(std::move(next));
  }
  if (!(residual < opt.tolerance)) {
    throw numerical_error("self-consistency iteration did not converge (possible proximity to beta_c); residual " +
                              std::to_string(residual),
                          residual);
  }

  StationaryState s;
  s.beta = beta;
  s.density = nu;
  s.residual = residual;
  const auto fam = detect_cosine_family(V, W);
  s.eta = fam ? fam->eta : 0.0;
  if (fam) {
    const double first = std::abs(nu.mode(1));
    const double rc = V.is_constant() ? first : nu.mode(1).real();
    s.amplitude_a = beta * fam->coupling * (fam->eta + rc);
  }

  double dev = 0.0;
  for (double v : nu.values()) dev = std::max(dev, std::abs(v - 1.0));
  const double e = free_energy(nu, V, W, beta);
  double best = e;
  for (double other : known_critical_energies(V, W, beta, n)) best = std::min(best, other);
  if (dev < 1e-8)
    s.kind = StateKind::uniform;
  else if (e <= best + 1e-9 * (1.0 + std::abs(best)))
    s.kind = StateKind::minimiser;
  else
    s.kind = StateKind::nonminimising_critical;
  return s;
}

// ---------------------------------------------------------------------------

struct BifurcationRow {
  double beta = 0.0;
  double a_min = 0.0;
  std::optional<double> a_star;
  /// E(other critical point) - E(nu^min); the other point is nu^* when it
  /// exists, the uniform state for eta = 0 above beta = 2, else none (0).
  double energy_gap = 0.0;
  /// E(nu^min) <= E(every other root) at this beta.
  bool min_branch_is_minimiser = true;
};

/// Amplitude branches for V = -eta cos, W = -cos over an ascending beta grid.
inline std::vector<BifurcationRow> bifurcation_scan(std::span<const double> beta_grid, double eta,
                                                    std::size_t grid_size = 512) {
  if (!std::is_sorted(beta_grid.begin(), beta_grid.end())) throw validation_error("beta grid must be ascending");
  const auto V = CosineSeries::cosine(-eta);
  const auto W = CosineSeries::cosine(-1.0);
  std::vector<BifurcationRow> rows(beta_grid.size());
  parallel_for(beta_grid.size(), [&](std::size_t i) {
    const double beta = beta_grid[i];
    const auto roots = amplitude_roots(beta, eta);
    BifurcationRow row;
    row.beta = beta;
    row.a_min = roots.a_min;
    row.a_star = roots.a_star;
    const double e_min = free_energy(DensityField::von_mises(roots.a_min, grid_size), V, W, beta);
    for (double a : roots.roots) {
      const double e = free_energy(DensityField::von_mises(a, grid_size), V, W, beta);
      if (e < e_min - 1e-12 * (1.0 + std::abs(e_min))) row.min_branch_is_minimiser = false;
    }
    if (roots.a_star) {
      row.energy_gap = free_energy(DensityField::von_mises(*roots.a_star, grid_size), V, W, beta) - e_min;
    } else if (eta == 0.0 && roots.a_min > 0.0) {
      row.energy_gap = free_energy(DensityField::uniform(grid_size), V, W, beta) - e_min;
    }
    rows[i] = row;
  });
  return rows;
}

}  // namespace mvlab
