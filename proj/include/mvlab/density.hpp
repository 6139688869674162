#pragma once

// Probability densities on the unit torus: canonical Fourier modes with a
// derived grid view, plus CDF / quantile tables built from the modes.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvlab/errors.hpp"
#include "mvlab/fft.hpp"
#include "mvlab/potentials.hpp"

namespace mvlab {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// A unit-mass density on T = [0, 1). Modes \hat nu(k), k = 0..n/2, are the
/// canonical data with \hat nu(0) == 1 exactly; grid values at x_j = j/n are
/// derived from them.
class DensityField {
 public:
  static constexpr std::size_t default_grid = 256;
  static constexpr std::size_t min_grid = 64;

  DensityField() : DensityField(uniform()) {}

  static DensityField uniform(std::size_t grid_size = default_grid) {
    return from_grid(std::vector<double>(grid_size, 1.0));
  }

  /// Normalises the samples to unit trapezoid mass.
  static DensityField from_grid(std::vector<double> values) {
    check_grid(values.size());
    double mass = 0.0;
    for (double v : values) {
      if (!std::isfinite(v)) throw validation_error("non-finite density value");
      mass += v;
    }
    mass /= static_cast<double>(values.size());
    if (!(mass > 0.0)) throw validation_error("density has nonpositive mass");
    for (auto& v : values) v /= mass;
    auto modes = fft::forward(values);
    return DensityField(std::move(modes), std::move(values));
  }

  /// Modes k = 0..m-1 (missing modes are zero). Mode 0 is overwritten with 1.
  static DensityField from_modes(std::vector<std::complex<double>> modes, std::size_t grid_size) {
    check_grid(grid_size);
    modes.resize(grid_size / 2 + 1);
    return DensityField(std::move(modes), grid_size);
  }

  static DensityField from_function(const std::function<double(double)>& f,
                                    std::size_t grid_size = default_grid) {
    check_grid(grid_size);
    std::vector<double> v(grid_size);
    for (std::size_t j = 0; j < grid_size; ++j) v[j] = f(static_cast<double>(j) / static_cast<double>(grid_size));
    return from_grid(std::move(v));
  }

  /// nu(x) proportional to exp(a cos(2 pi (x - center))).
  static DensityField von_mises(double amplitude, std::size_t grid_size = default_grid, double center = 0.0) {
    return from_function([&](double x) { return std::exp(amplitude * (std::cos(two_pi * (x - center)) - 1.0)); },
                         grid_size);
  }

  /// nu proportional to exp(-beta U).
  static DensityField gibbs(const CosineSeries& U, double beta, std::size_t grid_size = default_grid) {
    auto u = U.sample(grid_size);
    const double umin = *std::min_element(u.begin(), u.end());
    for (auto& v : u) v = std::exp(-beta * (v - umin));
    return from_grid(std::move(u));
  }

  std::size_t grid_size() const noexcept { return n_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<const std::complex<double>> modes() const noexcept { return modes_; }

  /// \hat nu(k) for any integer k; conjugate symmetric, zero beyond n/2.
  std::complex<double> mode(int k) const {
    const std::size_t m = static_cast<std::size_t>(std::abs(k));
    if (m >= modes_.size()) return {};
    return k >= 0 ? modes_[m] : std::conj(modes_[m]);
  }

  double grid_point(std::size_t j) const { return static_cast<double>(j) / static_cast<double>(n_); }
  double spacing() const { return 1.0 / static_cast<double>(n_); }

  /// Trigonometric interpolant at arbitrary x.
  double at(double x) const {
    double v = modes_[0].real();
    const std::size_t half = n_ / 2;
    for (std::size_t k = 1; k <= half; ++k) {
      const double w = (k == half) ? 1.0 : 2.0;
      const double th = two_pi * static_cast<double>(k) * x;
      v += w * (modes_[k].real() * std::cos(th) - modes_[k].imag() * std::sin(th));
    }
    return v;
  }

  double min_value() const { return *std::min_element(values_.begin(), values_.end()); }
  double max_value() const { return *std::max_element(values_.begin(), values_.end()); }

  /// Trapezoid mass (1 up to rounding).
  double integral() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s / static_cast<double>(n_);
  }

  /// \int f dnu by trapezoid on the grid.
  double expectation(const std::function<double(double)>& f) const {
    double s = 0.0;
    for (std::size_t j = 0; j < n_; ++j) s += f(grid_point(j)) * values_[j];
    return s / static_cast<double>(n_);
  }

  /// x -> nu(x - c).
  DensityField shifted(double c) const {
    auto m = modes_;
    for (std::size_t k = 1; k < m.size(); ++k) m[k] *= std::polar(1.0, -two_pi * static_cast<double>(k) * c);
    return from_modes(std::move(m), n_);
  }

  /// Zero-padded or truncated to another grid.
  DensityField resampled(std::size_t grid_size) const {
    if (grid_size == n_) return *this;
    auto m = modes_;
    m.resize(std::min(m.size(), grid_size / 2));
    return from_modes(std::move(m), grid_size);
  }

 private:
  DensityField(std::vector<std::complex<double>> modes, std::size_t n) : n_(n), modes_(std::move(modes)) {
    modes_[0] = 1.0;
    modes_[n_ / 2] = {modes_[n_ / 2].real(), 0.0};
    values_ = fft::inverse(modes_, n_);
  }

  // Keeps the samples exactly; modes are their transform.
  DensityField(std::vector<std::complex<double>> modes, std::vector<double> values)
      : n_(values.size()), modes_(std::move(modes)), values_(std::move(values)) {
    modes_[0] = 1.0;
  }

  static void check_grid(std::size_t n) {
    if (!is_power_of_two(n) || n < min_grid) throw validation_error("grid size must be a power of two >= 64");
  }

  std::size_t n_;
  std::vector<std::complex<double>> modes_;
  std::vector<double> values_;
};

inline void to_json(nlohmann::json& j, const DensityField& d) {
  nlohmann::json modes = nlohmann::json::array();
  for (const auto& c : d.modes()) modes.push_back({c.real(), c.imag()});
  std::vector<double> grid(d.grid_size());
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = d.grid_point(i);
  j = nlohmann::json{{"grid", grid},
                     {"values", std::vector<double>(d.values().begin(), d.values().end())},
                     {"modes", modes}};
}

/// Exact convolution W * nu as a trigonometric series (bandlimited by W).
inline CosineSeries convolve(const CosineSeries& W, const DensityField& nu) {
  const int K = W.max_mode();
  std::vector<double> c(static_cast<std::size_t>(K) + 1, 0.0), s(static_cast<std::size_t>(K), 0.0);
  c[0] = W.a(0);
  for (int k = 1; k <= K; ++k) {
    const auto p = W.fourier(k) * nu.mode(k);
    c[static_cast<std::size_t>(k)] = 2.0 * p.real();
    s[static_cast<std::size_t>(k) - 1] = -2.0 * p.imag();
  }
  return CosineSeries(std::move(c), std::move(s));
}

/// Cumulative distribution F(x) = \int_0^x nu on a uniform table, evaluated
/// exactly from the Fourier modes, with its inverse.
class QuantileTable {
 public:
  static constexpr std::size_t default_points = 4096;

  explicit QuantileTable(const DensityField& nu, std::size_t points = default_points) : m_(points) {
    // F(x) = x + sum_{k != 0} \hat nu(k) (e^{2 pi i k x} - 1) / (2 pi i k)
    //      = x + 2 Re sum_{k>0} \hat nu(k) (e^{2 pi i k x} - 1) / (2 pi i k).
    const std::size_t fine = std::max<std::size_t>(points, nu.grid_size());
    std::vector<std::complex<double>> g(fine / 2 + 1);
    std::complex<double> offset{};
    for (std::size_t k = 1; k < std::min(g.size(), nu.modes().size()); ++k) {
      const auto mk = nu.modes()[k];
      if (2 * k == nu.grid_size()) continue;  // Nyquist carries no antiderivative
      g[k] = mk / std::complex<double>(0.0, two_pi * static_cast<double>(k));
      offset += g[k];
    }
    auto periodic = fft::inverse(g, fine);
    cdf_.resize(fine + 1);
    const double off = 2.0 * offset.real();
    for (std::size_t j = 0; j < fine; ++j) {
      const double x = static_cast<double>(j) / static_cast<double>(fine);
      cdf_[j] = x + periodic[j] - off;
    }
    cdf_[0] = 0.0;
    cdf_[fine] = 1.0;
    // Enforce monotonicity against rounding.
    for (std::size_t j = 1; j <= fine; ++j) cdf_[j] = std::max(cdf_[j], cdf_[j - 1]);
    for (std::size_t j = 0; j <= fine; ++j) cdf_[j] = std::min(cdf_[j], 1.0);
    fine_ = fine;
  }

  std::size_t resolution() const { return fine_; }

  /// F at the table nodes x_j = j / resolution(), j = 0..resolution().
  std::span<const double> cdf() const { return cdf_; }

  double cdf_at(double x) const {
    const double fl = std::floor(x);
    const double r = x - fl;
    const double pos = r * static_cast<double>(fine_);
    const std::size_t i = std::min(static_cast<std::size_t>(pos), fine_ - 1);
    const double t = pos - static_cast<double>(i);
    return fl + cdf_[i] + t * (cdf_[i + 1] - cdf_[i]);
  }

  /// Quantile on [0, 1], extended by Q(u + 1) = Q(u) + 1.
  double quantile(double u) const {
    const double fl = std::floor(u);
    const double r = u - fl;
    auto it = std::lower_bound(cdf_.begin(), cdf_.end(), r);
    std::size_t i = static_cast<std::size_t>(it - cdf_.begin());
    if (i == 0) return fl;
    const double c0 = cdf_[i - 1], c1 = cdf_[i];
    const double t = c1 > c0 ? (r - c0) / (c1 - c0) : 0.0;
    return fl + (static_cast<double>(i - 1) + t) / static_cast<double>(fine_);
  }

  /// Midpoint quantiles Q((i + 1/2)/m), i = 0..m-1.
  std::vector<double> midpoint_quantiles() const {
    std::vector<double> q(m_);
    for (std::size_t i = 0; i < m_; ++i) q[i] = quantile((static_cast<double>(i) + 0.5) / static_cast<double>(m_));
    return q;
  }

 private:
  std::size_t m_;
  std::size_t fine_ = 0;
  std::vector<double> cdf_;
};

}  // namespace mvlab
