#pragma once

// Fourier pseudospectral evolution of
//   d_t nu = beta^{-1} nu'' + (nu (W * nu + V)')'   on T,
// with the diffusion integrated exactly (integrating factor RK4), plus the
// circle transport metrics, relative entropy and the energy-dissipation
// audit used on the resulting traces.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mvlab/density.hpp"
#include "mvlab/errors.hpp"
#include "mvlab/fft.hpp"
#include "mvlab/io.hpp"
#include "mvlab/potentials.hpp"
#include "mvlab/stationary.hpp"

namespace mvlab {

// ---------------------------------------------------------------------------
// Distances between densities.

inline double l1_distance(const DensityField& mu, const DensityField& nu) {
  const std::size_t n = std::max(mu.grid_size(), nu.grid_size());
  const auto a = mu.resampled(n);
  const auto b = nu.resampled(n);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += std::abs(a.values()[j] - b.values()[j]);
  return s / static_cast<double>(n);
}

inline double sup_distance(const DensityField& mu, const DensityField& nu) {
  const std::size_t n = std::max(mu.grid_size(), nu.grid_size());
  const auto a = mu.resampled(n);
  const auto b = nu.resampled(n);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s = std::max(s, std::abs(a.values()[j] - b.values()[j]));
  return s;
}

namespace detail {

// Golden-section minimisation of a unimodal function on [lo, hi].
template <typename F>
double golden_minimum(F&& f, double lo, double hi, double tol = 1e-12) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  while (hi - lo > tol) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = f(x2);
    }
  }
  return std::min(f1, f2);
}

}  // namespace detail

/// min over translations c of the L1 distance between mu(. - c) and nu.
inline double min_shift_l1(const DensityField& mu, const DensityField& nu, std::size_t coarse = 512) {
  double best = std::numeric_limits<double>::infinity();
  double best_c = 0.0;
  for (std::size_t i = 0; i < coarse; ++i) {
    const double c = static_cast<double>(i) / static_cast<double>(coarse);
    const double d = l1_distance(mu.shifted(c), nu);
    if (d < best) {
      best = d;
      best_c = c;
    }
  }
  const double h = 1.0 / static_cast<double>(coarse);
  return std::min(best, detail::golden_minimum([&](double c) { return l1_distance(mu.shifted(c), nu); },
                                               best_c - h, best_c + h, 1e-10));
}

/// Wasserstein distance on the circle with the geodesic ground metric.
/// p = 1: min_c \int |F_mu - F_nu - c| (c the median of F_mu - F_nu).
/// p = 2: golden-section search over the cut theta of the quantile cost
///        \int_0^1 |Q_mu(t) - Q_nu(t + theta)|^2 dt, which is convex in theta.
inline double circle_wasserstein(const DensityField& mu, const DensityField& nu, int p,
                                 std::size_t quantiles = QuantileTable::default_points) {
  if (p != 1 && p != 2) throw validation_error("circle_wasserstein supports p = 1 or 2");
  const QuantileTable qm(mu, quantiles), qn(nu, quantiles);
  if (p == 1) {
    const std::size_t r = qm.resolution();
    std::vector<double> diff(r);
    for (std::size_t j = 0; j < r; ++j) {
      const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(r);
      diff[j] = qm.cdf_at(x) - qn.cdf_at(x);
    }
    auto sorted = diff;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(r / 2), sorted.end());
    const double c = sorted[r / 2];
    double s = 0.0;
    for (double d : diff) s += std::abs(d - c);
    return s / static_cast<double>(r);
  }
  const auto qa = qm.midpoint_quantiles();
  const std::size_t m = qa.size();
  auto cost = [&](double theta) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double t = (static_cast<double>(i) + 0.5) / static_cast<double>(m);
      const double d = qa[i] - qn.quantile(t + theta);
      s += d * d;
    }
    return s / static_cast<double>(m);
  };
  return std::sqrt(std::max(0.0, detail::golden_minimum(cost, -1.0, 1.0, 1e-12)));
}

/// \int mu log(mu / nu) on the common grid.
inline double relative_entropy(const DensityField& mu, const DensityField& nu) {
  const std::size_t n = std::max(mu.grid_size(), nu.grid_size());
  const auto a = mu.resampled(n);
  const auto b = nu.resampled(n);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double q = b.values()[j];
    if (!(q > 0.0)) throw numerical_error("relative entropy reference density is not strictly positive", q);
    const double p = a.values()[j];
    if (p > 0.0) s += p * std::log(p / q);
  }
  return std::max(0.0, s / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Evolution.

struct EvolutionTrace {
  double beta = 1.0;
  std::vector<double> times;
  std::vector<double> free_energy;
  std::vector<double> dissipation;
  /// Empty unless a target was supplied.
  std::vector<double> d2_to_target;
  std::vector<double> l1_to_target;

  std::size_t size() const { return times.size(); }
  bool has_target() const { return !d2_to_target.empty(); }
};

struct EvolveOptions {
  double dt = 1e-3;
  double t_final = 1.0;
  /// Record every `record_stride` steps (the first and last step are always
  /// recorded).
  std::size_t record_stride = 100;
  std::optional<DensityField> target;
  /// Called after every step with (time, current density modes k = 0..n/2).
  std::function<void(double, std::span<const std::complex<double>>)> on_step;
};

struct EvolveResult {
  DensityField final_density;
  EvolutionTrace trace;
};

/// Largest step the explicit transport part tolerates: the RK4 stability
/// interval on the imaginary axis is about 2.8; we require
/// dt * 2 pi (n/2) * sup|U'| <= 2.5 with sup|U'| <= sup|V'| + sup|W'|.
inline double max_stable_dt(const CosineSeries& V, const CosineSeries& W, std::size_t grid_size) {
  auto sup_grad = [](const CosineSeries& p) {
    if (p.is_constant()) return 0.0;
    return periodic_maximum([&](double x) { return std::abs(p.derivative(x)); });
  };
  const double u = sup_grad(V) + sup_grad(W);
  if (u == 0.0) return std::numeric_limits<double>::infinity();
  return 2.5 / (two_pi * static_cast<double>(grid_size / 2) * u);
}

namespace detail {

class McKeanVlasovRhs {
 public:
  McKeanVlasovRhs(const CosineSeries& V, const CosineSeries& W, std::size_t n)
      : n_(n), half_(n / 2), padded_(3 * n / 2), V_(V), W_(W) {
    kp_ = std::min<std::size_t>(static_cast<std::size_t>(std::max(V.max_mode(), W.max_mode())), half_ - 1);
    nu_pad_.resize(padded_);
    grad_pad_.resize(padded_);
    grad_modes_.assign(half_ + 1, {});
    flux_modes_.resize(padded_ / 2 + 1);
    if (kp_ <= direct_modes) {
      twiddle_.resize(kp_ * padded_);
      for (std::size_t k = 1; k <= kp_; ++k)
        for (std::size_t j = 0; j < padded_; ++j)
          twiddle_[(k - 1) * padded_ + j] =
              std::polar(2.0, two_pi * static_cast<double>(k * j % padded_) / static_cast<double>(padded_));
    }
  }

  /// out_k = 2 pi i k [nu (V + W * nu)']^_k for k < n/2; Nyquist zeroed.
  /// Returns the minimum of nu on the padded grid.
  double operator()(std::span<const std::complex<double>> u, std::span<std::complex<double>> out) {
    auto& fft = fft::thread_local_fft(padded_);
    for (std::size_t k = 1; k <= kp_; ++k) {
      const int ki = static_cast<int>(k);
      const auto pot = V_.fourier(ki) + W_.fourier(ki) * u[k];
      grad_modes_[k] = std::complex<double>(0.0, two_pi * static_cast<double>(k)) * pot;
    }
    fft.inverse(u.first(half_), nu_pad_);
    if (kp_ <= direct_modes) {
      std::fill(grad_pad_.begin(), grad_pad_.end(), 0.0);
      for (std::size_t k = 1; k <= kp_; ++k) {
        const double gr = grad_modes_[k].real(), gi = grad_modes_[k].imag();
        const auto* tw = twiddle_.data() + (k - 1) * padded_;
        for (std::size_t j = 0; j < padded_; ++j) grad_pad_[j] += gr * tw[j].real() - gi * tw[j].imag();
      }
    } else {
      fft.inverse(std::span<const std::complex<double>>(grad_modes_).first(kp_ + 1), grad_pad_);
    }
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < padded_; ++j) {
      lo = std::min(lo, nu_pad_[j]);
      nu_pad_[j] *= grad_pad_[j];
    }
    fft.forward(nu_pad_, flux_modes_);
    for (std::size_t k = 0; k < half_; ++k)
      out[k] = std::complex<double>(0.0, two_pi * static_cast<double>(k)) * flux_modes_[k];
    out[half_] = 0.0;
    return lo;
  }

 private:
  static constexpr std::size_t direct_modes = 8;
  std::size_t n_, half_, padded_, kp_ = 0;
  const CosineSeries& V_;
  const CosineSeries& W_;
  std::vector<double> nu_pad_, grad_pad_;
  std::vector<std::complex<double>> grad_modes_, flux_modes_, twiddle_;
};

}  // namespace detail

/// Integrating-factor RK4 evolution. Mode 0 is never modified. Aborts with
/// numerical_error on positivity loss (min nu < -1e-8 max nu) or blow-up.
inline EvolveResult evolve_mv(const DensityField& nu0, const CosineSeries& V, const CosineSeries& W, double beta,
                              const EvolveOptions& opt) {
  if (!(beta > 0.0)) throw validation_error("beta must be positive");
  if (!(opt.dt > 0.0) || !(opt.t_final >= 0.0)) throw validation_error("need dt > 0 and t_final >= 0");
  if (nu0.min_value() < -1e-8 * nu0.max_value()) throw validation_error("initial density is not a valid density");
  const std::size_t n = nu0.grid_size();
  const double dt_max = max_stable_dt(V, W, n);
  if (opt.dt > dt_max) {
    throw validation_error("dt = " + std::to_string(opt.dt) + " exceeds the transport stability bound " +
                           std::to_string(dt_max));
  }
  const std::size_t half = n / 2;
  const std::size_t steps =
      opt.t_final == 0.0 ? 0 : static_cast<std::size_t>(std::ceil(opt.t_final / opt.dt - 1e-9));
  const double dt = steps ? opt.t_final / static_cast<double>(steps) : opt.dt;

  std::vector<double> e_full(half + 1), e_half(half + 1);
  for (std::size_t k = 0; k <= half; ++k) {
    const double lam = -std::pow(two_pi * static_cast<double>(k), 2) / beta;
    e_full[k] = std::exp(lam * dt);
    e_half[k] = std::exp(0.5 * lam * dt);
  }
  e_full[half] = e_half[half] = 0.0;

  using cvec = std::vector<std::complex<double>>;
  cvec u(nu0.modes().begin(), nu0.modes().end());
  u[half] = 0.0;
  cvec ka(half + 1), kb(half + 1), kc(half + 1), kd(half + 1), stage(half + 1);
  detail::McKeanVlasovRhs rhs(V, W, n);

  const double target_scale = std::max(1.0, nu0.max_value());
  EvolutionTrace trace;
  trace.beta = beta;
  auto record = [&](double t) {
    const auto d = DensityField::from_modes(u, n);
    trace.times.push_back(t);
    trace.free_energy.push_back(free_energy(d, V, W, beta));
    trace.dissipation.push_back(dissipation(d, V, W, beta));
    if (opt.target) {
      trace.d2_to_target.push_back(circle_wasserstein(d, *opt.target, 2));
      trace.l1_to_target.push_back(l1_distance(d, *opt.target));
    }
  };
  auto check = [&](double lo, double t) {
    if (lo < -1e-8 * target_scale) throw numerical_error("positivity violated at t = " + std::to_string(t), t);
  };

  record(0.0);
  for (std::size_t s = 1; s <= steps; ++s) {
    const double t0 = static_cast<double>(s - 1) * dt;
    check(rhs(u, ka), t0);
    for (std::size_t k = 0; k <= half; ++k) {
      ka[k] *= dt;
      stage[k] = e_half[k] * (u[k] + 0.5 * ka[k]);
    }
    rhs(stage, kb);
    for (std::size_t k = 0; k <= half; ++k) {
      kb[k] *= dt;
      stage[k] = e_half[k] * u[k] + 0.5 * kb[k];
    }
    rhs(stage, kc);
    for (std::size_t k = 0; k <= half; ++k) {
      kc[k] *= dt;
      stage[k] = e_full[k] * u[k] + e_half[k] * kc[k];
    }
    rhs(stage, kd);
    double biggest = 0.0;
    for (std::size_t k = 1; k < half; ++k) {
      kd[k] *= dt;
      u[k] = e_full[k] * u[k] + (e_full[k] * ka[k] + 2.0 * e_half[k] * (kb[k] + kc[k]) + kd[k]) / 6.0;
      biggest = std::max(biggest, std::abs(u[k]));
    }
    const double t = static_cast<double>(s) * dt;
    if (!std::isfinite(biggest) || biggest > 1e6) throw numerical_error("mode blow-up at t = " + std::to_string(t), t);
    if (opt.on_step) opt.on_step(t, u);
    if (s % opt.record_stride == 0 || s == steps) record(t);
  }
  auto final_density = DensityField::from_modes(u, n);
  check(final_density.min_value(), opt.t_final);
  return {std::move(final_density), std::move(trace)};
}

inline std::string trace_csv(const EvolutionTrace& tr) {
  std::string out = "time,energy,dissipation,d2,l1\r\n";
  for (std::size_t i = 0; i < tr.size(); ++i) {
    std::vector<std::string> f{io::format_double(tr.times[i]), io::format_double(tr.free_energy[i]),
                               io::format_double(tr.dissipation[i]),
                               tr.has_target() ? io::format_double(tr.d2_to_target[i]) : "",
                               tr.has_target() ? io::format_double(tr.l1_to_target[i]) : ""};
    out += io::csv_row(f);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct AuditReport {
  /// Free energy nonincreasing between records within 1e-9 (1 + |E|).
  bool monotone = true;
  /// Slope of log d2 against t (negative for exponential decay); NaN without
  /// a target or usable points.
  double fitted_rate = std::numeric_limits<double>::quiet_NaN();
  /// p in d2 ~ C t^{-p}, from the slope of log d2 against log t.
  double algebraic_exponent = std::numeric_limits<double>::quiet_NaN();
  /// |(E_end - E_0) + \int beta^{-2} D dt| / |E_end - E_0|.
  double energy_dissipation_error = 0.0;
  /// Whether the identity holds within 5% (or to 1e-12 absolutely when the
  /// energy does not move).
  bool energy_dissipation_ok = true;
  double max_dissipation = 0.0;
};

namespace detail {

inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace detail

/// Energy-dissipation identity dE/dt = -beta^{-2} D (D as returned by
/// dissipation()), monotonicity, and decay fits of d2 to the target.
inline AuditReport convergence_audit(const EvolutionTrace& tr, double d2_floor = 1e-8) {
  if (tr.size() == 0) throw validation_error("empty trace");
  AuditReport r;
  const double scale = 1.0 / (tr.beta * tr.beta);
  double integral = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    r.max_dissipation = std::max(r.max_dissipation, tr.dissipation[i]);
    if (i == 0) continue;
    const double tol = 1e-9 * (1.0 + std::abs(tr.free_energy[i - 1]));
    if (tr.free_energy[i] > tr.free_energy[i - 1] + tol) r.monotone = false;
    integral += 0.5 * (tr.times[i] - tr.times[i - 1]) * scale * (tr.dissipation[i] + tr.dissipation[i - 1]);
  }
  const double de = tr.free_energy.back() - tr.free_energy.front();
  const double mismatch = std::abs(de + integral);
  r.energy_dissipation_error = std::abs(de) > 0.0 ? mismatch / std::abs(de) : mismatch;
  r.energy_dissipation_ok = mismatch <= 0.05 * std::abs(de) + 1e-12;

  if (tr.has_target()) {
    std::vector<double> t, lt, ld;
    for (std::size_t i = 0; i < tr.size(); ++i) {
      if (tr.d2_to_target[i] > d2_floor && tr.times[i] > 0.0) {
        t.push_back(tr.times[i]);
        lt.push_back(std::log(tr.times[i]));
        ld.push_back(std::log(tr.d2_to_target[i]));
      }
    }
    if (t.size() >= 2) {
      r.fitted_rate = detail::ls_slope(t, ld);
      r.algebraic_exponent = -detail::ls_slope(lt, ld);
    }
  }
  return r;
}

}  // namespace mvlab
