#pragma once

// Reflection/synchronous coupling of two one-particle diffusions on the
// torus: the concave distance profile f, the coupled pair and contraction
// rates.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mvlab/density.hpp"
#include "mvlab/errors.hpp"
#include "mvlab/parallel.hpp"
#include "mvlab/pde.hpp"
#include "mvlab/potentials.hpp"
#include "mvlab/rng.hpp"
#include "mvlab/stationary.hpp"
#include "mvlab/stats.hpp"

namespace mvlab {

namespace detail {

template <typename F>
double simpson_step(F& f, double a, double b, double fa, double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double diff = left + right - whole;
  if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature of f on [a, b] to absolute tolerance tol.
template <typename F>
double adaptive_simpson(F&& f, double a, double b, double tol = 1e-12, int max_depth = 40) {
  if (a == b) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

/// psi(r) = exp(beta kappa r^2 / 8), Phi = \int_0^r psi,
/// c = (\int_0^{1/2} Phi / psi)^{-1}, g = 1 - (c/2) \int_0^r Phi / psi,
/// f = \int_0^r g psi, tabulated on [0, 1/2] with monotone cubic
/// interpolation of f.
class DistanceProfile {
 public:
  static constexpr std::size_t default_nodes = 4096;

  DistanceProfile(double kappa, double beta, std::size_t nodes = default_nodes) : kappa_(kappa), beta_(beta) {
    if (!(kappa <= 0.0)) throw validation_error("kappa must be <= 0");
    if (!(beta > 0.0)) throw validation_error("beta must be positive");
    if (nodes < 3) throw validation_error("need at least 3 nodes");
    const std::size_t n = nodes;
    h_ = 0.5 / static_cast<double>(n - 1);
    r_.resize(n);
    for (std::size_t i = 0; i < n; ++i) r_[i] = static_cast<double>(i) * h_;
    constexpr double tol = 1e-14;

    auto psi_fn = [this](double r) { return psi(r); };
    Phi_.assign(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) Phi_[i] = Phi_[i - 1] + adaptive_simpson(psi_fn, r_[i - 1], r_[i], tol);
    auto Phi_fn = [&](double r) {
      const std::size_t i = node_below(r);
      return Phi_[i] + adaptive_simpson(psi_fn, r_[i], r, tol);
    };
    auto ratio_fn = [&](double r) { return Phi_fn(r) / psi(r); };
    std::vector<double> R(n, 0.0);  // \int_0^r Phi / psi
    for (std::size_t i = 1; i < n; ++i) R[i] = R[i - 1] + adaptive_simpson(ratio_fn, r_[i - 1], r_[i], tol);
    c_ = 1.0 / R.back();
    g_.resize(n);
    for (std::size_t i = 0; i < n; ++i) g_[i] = 1.0 - 0.5 * c_ * R[i];
    auto g_fn = [&](double r) {
      const std::size_t i = node_below(r);
      return 1.0 - 0.5 * c_ * (R[i] + adaptive_simpson(ratio_fn, r_[i], r, tol));
    };
    f_.assign(n, 0.0);
    for (std::size_t i = 1; i < n; ++i)
      f_[i] = f_[i - 1] + adaptive_simpson([&](double r) { return g_fn(r) * psi(r); }, r_[i - 1], r_[i], tol);
    fp_.resize(n);
    for (std::size_t i = 0; i < n; ++i) fp_[i] = g_[i] * psi(r_[i]);
    // Fritsch-Carlson limiter on the Hermite slopes.
    slope_ = fp_;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double d = (f_[i + 1] - f_[i]) / h_;
      if (d <= 0.0) {
        slope_[i] = slope_[i + 1] = 0.0;
        continue;
      }
      const double a = slope_[i] / d, b = slope_[i + 1] / d;
      const double s = a * a + b * b;
      if (s > 9.0) {
        const double t = 3.0 / std::sqrt(s);
        slope_[i] = t * a * d;
        slope_[i + 1] = t * b * d;
      }
    }
  }

  double kappa() const { return kappa_; }
  double beta() const { return beta_; }
  double c() const { return c_; }
  std::size_t nodes() const { return r_.size(); }
  std::span<const double> r_nodes() const { return r_; }
  std::span<const double> f_nodes() const { return f_; }
  std::span<const double> f_prime_nodes() const { return fp_; }
  std::span<const double> g_nodes() const { return g_; }
  std::span<const double> Phi_nodes() const { return Phi_; }

  double psi(double r) const { return std::exp(beta_ * kappa_ * r * r / 8.0); }

  /// f''(r_i) = g' psi + g psi' = -(c/2) Phi + (beta kappa r / 4) f'.
  double f_second_node(std::size_t i) const { return -0.5 * c_ * Phi_[i] + beta_ * kappa_ * r_[i] / 4.0 * fp_[i]; }

  /// Monotone cubic interpolant of f on [0, 1/2] (clamped outside).
  double f(double r) const {
    if (r <= 0.0) return 0.0;
    if (r >= 0.5) return f_.back();
    const std::size_t i = std::min(static_cast<std::size_t>(r / h_), r_.size() - 2);
    const double t = (r - r_[i]) / h_;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * f_[i] + (t3 - 2 * t2 + t) * h_ * slope_[i] + (-2 * t3 + 3 * t2) * f_[i + 1] +
           (t3 - t2) * h_ * slope_[i + 1];
  }

  /// d_f(x, y) = f(d_T(x, y)).
  double distance(double x, double y) const { return f(torus_distance(x, y)); }

 private:
  std::size_t node_below(double r) const {
    return std::min(static_cast<std::size_t>(std::max(r, 0.0) / h_), r_.size() - 1);
  }

  double kappa_, beta_, c_ = 0.0, h_ = 0.0;
  std::vector<double> r_, Phi_, g_, f_, fp_, slope_;
};

/// Lower bound beta |kappa| / (4 (e^{beta |kappa| / 32} - 1)) on c (8 at
/// kappa = 0).
inline double contraction_constant_lower_bound(double kappa, double beta) {
  const double s = beta * std::abs(kappa) / 32.0;
  if (s == 0.0) return 8.0;
  return beta * std::abs(kappa) / (4.0 * std::expm1(s));
}

/// Predicted contraction rate 2 c / beta of E f(gamma_t).
inline double predicted_rate(const DistanceProfile& p) { return 2.0 * p.c() / p.beta(); }

/// Largest beta with |kappa| / (4 e^s (e^s - 1)) >= sup|W''|, s = beta |kappa| / 32;
/// the left side tends to 8 / beta as kappa -> 0. +infinity when W'' = 0.
inline double high_temperature_threshold(const CosineSeries& V, const CosineSeries& W) {
  const double M = W.is_constant() ? 0.0 : sup_abs_second_derivative(W);
  if (M == 0.0) return std::numeric_limits<double>::infinity();
  const double kappa = semiconvexity_kappa(V, W);
  const double k = std::abs(kappa);
  auto lhs = [&](double beta) {
    if (k == 0.0) return 8.0 / beta;
    const double s = beta * k / 32.0;
    return k / (4.0 * std::exp(s) * std::expm1(s));
  };
  if (k == 0.0) return 8.0 / M;
  double lo = 0.0, hi = 1.0;
  while (lhs(hi) >= M) {
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (lhs(mid) >= M ? lo : hi) = mid;
  }
  return lo;
}

// ---------------------------------------------------------------------------
// Coupled pair.

/// Smoothstep ramp of gamma between delta/2 (0) and delta (1).
inline double reflection_weight(double gamma, double delta) {
  if (gamma <= 0.5 * delta) return 0.0;
  if (gamma >= delta) return 1.0;
  const double t = (gamma - 0.5 * delta) / (0.5 * delta);
  return t * t * (3.0 - 2.0 * t);
}

enum class CouplingMode {
  /// Y follows the mean-field law nu(t) evolved by the PDE from nu0.
  mean_field,
  /// Y follows the same frozen field as X.
  frozen,
};

struct CouplingOptions {
  double delta = 1e-3;
  double dt = 1e-4;
  double t_final = 1.0;
  std::size_t replicas = 1000;
  std::size_t record_stride = 10;
  std::uint64_t seed = 0;
  CouplingMode mode = CouplingMode::mean_field;
  /// Use the same initial draw for X and Y (Y_0 = X_0).
  bool identical_start = false;
};

struct CouplingTrace {
  std::vector<double> times;
  std::vector<double> mean_f_gamma;
  std::vector<double> standard_error;
  std::size_t replicas = 0;
  double delta = 0.0;
  /// Largest gamma seen at any record (0 for an identical start).
  double max_gamma = 0.0;
  /// Quotient positions at t_final, per replica.
  std::vector<double> final_x, final_y;
};

/// Y_t: drift -V' - (W * nu(t))', noise sqrt(2/beta)(phi_r dB1 + phi_s dB2);
/// X_t: drift -V' - (W * target)', noise sqrt(2/beta)(-phi_r dB1 + phi_s dB2),
/// phi_r = reflection_weight(gamma(|Y - X|)), phi_s = sqrt(1 - phi_r^2).
/// X_0 ~ target, Y_0 ~ nu0 independently. Replica r draws from stream r.
inline CouplingTrace simulate_coupling(const CosineSeries& V, const CosineSeries& W, const StationaryState& target,
                                       const DensityField& nu0, double beta, const DistanceProfile& profile,
                                       const CouplingOptions& opt) {
  if (!(beta > 0.0)) throw validation_error("beta must be positive");
  if (!(opt.delta > 0.0) || !(opt.dt > 0.0) || !(opt.t_final > 0.0) || opt.replicas == 0 || opt.record_stride == 0)
    throw validation_error("invalid coupling options");
  const double lipschitz = (V.is_constant() ? 0.0 : sup_abs_second_derivative(V)) +
                           (W.is_constant() ? 0.0 : sup_abs_second_derivative(W));
  if (opt.dt * lipschitz >= 0.1) {
    throw validation_error("dt * Lipschitz(drift) = " + std::to_string(opt.dt * lipschitz) + " must be < 0.1");
  }
  const std::size_t steps = static_cast<std::size_t>(std::ceil(opt.t_final / opt.dt - 1e-9));
  const double dt = opt.t_final / static_cast<double>(steps);
  const double noise = std::sqrt(2.0 * dt / beta);
  const int K = W.max_mode();

  const auto frozen_x = mean_field_potential(target.density, V, W);
  // Y's potential per step: V + W * nu(t); only modes 1..K of nu(t) matter.
  std::vector<CosineSeries> y_field;
  if (opt.mode == CouplingMode::frozen) {
    y_field.push_back(frozen_x);
  } else {
    y_field.reserve(steps + 1);
    y_field.push_back(mean_field_potential(nu0, V, W));
    const double dt_max = max_stable_dt(V, W, nu0.grid_size());
    const std::size_t sub = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dt / dt_max)));
    EvolveOptions eo;
    eo.dt = dt / static_cast<double>(sub);
    eo.t_final = opt.t_final;
    eo.record_stride = std::numeric_limits<std::size_t>::max();
    std::size_t count = 0;
    eo.on_step = [&](double, std::span<const std::complex<double>> modes) {
      if (++count % sub != 0) return;
      std::vector<std::complex<double>> m(modes.begin(), modes.begin() + std::min<std::size_t>(modes.size(), K + 1));
      y_field.push_back(mean_field_potential(DensityField::from_modes(std::move(m), nu0.grid_size()), V, W));
    };
    evolve_mv(nu0, V, W, beta, eo);
    while (y_field.size() < steps + 1) y_field.push_back(y_field.back());
  }

  const QuantileTable qx(target.density);
  const QuantileTable qy(nu0);
  std::vector<std::size_t> record_steps;
  for (std::size_t s = 0; s <= steps; ++s)
    if (s % opt.record_stride == 0 || s == steps) record_steps.push_back(s);
  const std::size_t R = opt.replicas;
  std::vector<double> fvals(R * record_steps.size());
  std::vector<double> gmax(R, 0.0);
  CouplingTrace trace;
  trace.final_x.resize(R);
  trace.final_y.resize(R);

  parallel_for(R, [&](std::size_t r) {
    Stream rng(opt.seed, r);
    double x = qx.quantile(rng.uniform());
    double y = opt.identical_start ? x : qy.quantile(rng.uniform());
    std::size_t next = 0;
    auto record = [&](std::size_t s) {
      if (next < record_steps.size() && record_steps[next] == s) {
        const double gamma = torus_distance(x, y);
        gmax[r] = std::max(gmax[r], gamma);
        fvals[r * record_steps.size() + next] = profile.f(gamma);
        ++next;
      }
    };
    record(0);
    for (std::size_t s = 1; s <= steps; ++s) {
      const auto& uy = y_field[opt.mode == CouplingMode::frozen ? 0 : s - 1];
      const double gamma = torus_distance(x, y);
      const double pr = reflection_weight(gamma, opt.delta);
      const double ps = std::sqrt(std::max(0.0, 1.0 - pr * pr));
      const double b1 = rng.normal(), b2 = rng.normal();
      const double dx = -frozen_x.derivative(x) * dt + noise * (-pr * b1 + ps * b2);
      const double dy = -uy.derivative(y) * dt + noise * (pr * b1 + ps * b2);
      x += dx;
      y += dy;
      record(s);
    }
    trace.final_x[r] = wrap_unit(x);
    trace.final_y[r] = wrap_unit(y);
  });

  trace.replicas = R;
  trace.delta = opt.delta;
  for (std::size_t k = 0; k < record_steps.size(); ++k) {
    std::vector<double> col(R);
    for (std::size_t r = 0; r < R; ++r) col[r] = fvals[r * record_steps.size() + k];
    trace.times.push_back(static_cast<double>(record_steps[k]) * dt);
    trace.mean_f_gamma.push_back(stats::mean(col));
    trace.standard_error.push_back(std::sqrt(stats::variance(col) / static_cast<double>(R)));
  }
  for (double g : gmax) trace.max_gamma = std::max(trace.max_gamma, g);
  return trace;
}

/// Negative slope of log E f(gamma_t) against t over the records where the
/// mean lies in [floor, ceiling * initial value]; NaN with fewer than three.
inline double fit_decay_rate(const CouplingTrace& tr, double floor, double ceiling = 1.0) {
  std::vector<double> t, y;
  const double top = ceiling * tr.mean_f_gamma.front();
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    const double m = tr.mean_f_gamma[i];
    if (m > floor && m <= top) {
      t.push_back(tr.times[i]);
      y.push_back(std::log(m));
    }
  }
  if (t.size() < 3) return std::numeric_limits<double>::quiet_NaN();
  return -detail::ls_slope(t, y);
}

inline std::string coupling_csv(const CouplingTrace& tr) {
  std::string out = "time,mean_f,stderr\r\n";
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    std::vector<std::string> f{io::format_double(tr.times[i]), io::format_double(tr.mean_f_gamma[i]),
                               io::format_double(tr.standard_error[i])};
    out += io::csv_row(f);
  }
  return out;
}

}  // namespace mvlab
