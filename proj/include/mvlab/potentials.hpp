#pragma once

// Periodic potentials as finite trigonometric series, the N-particle
// Hamiltonian, H-stability and the semi-convexity constant.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvlab/errors.hpp"

namespace mvlab {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Maps x to [0, 1).
inline double wrap_unit(double x) {
  double r = x - std::floor(x);
  return r >= 1.0 ? 0.0 : r;
}

/// Geodesic distance on the unit circle, in [0, 1/2].
inline double torus_distance(double x, double y) {
  const double d = wrap_unit(x - y);
  return std::min(d, 1.0 - d);
}

struct PotentialEval {
  double value;
  double gradient;
  double second_derivative;
};

/// U(x) = sum_{k=0}^K a_k cos(2 pi k x) + sum_{k=1}^K b_k sin(2 pi k x).
class CosineSeries {
 public:
  CosineSeries() = default;

  /// cos_coeffs[k] multiplies cos(2 pi k x) (k = 0..K); sin_coeffs[k-1]
  /// multiplies sin(2 pi k x). Trailing zeros are trimmed.
  CosineSeries(std::vector<double> cos_coeffs, std::vector<double> sin_coeffs = {})
      : cos_(std::move(cos_coeffs)), sin_(std::move(sin_coeffs)) {
    if (cos_.empty()) cos_.push_back(0.0);
    for (double c : cos_)
      if (!std::isfinite(c)) throw validation_error("non-finite cosine coefficient");
    for (double s : sin_)
      if (!std::isfinite(s)) throw validation_error("non-finite sine coefficient");
    const std::size_t k = std::max(cos_.size() - 1, sin_.size());
    cos_.resize(k + 1, 0.0);
    sin_.resize(k, 0.0);
    trim();
  }

  /// amplitude * cos(2 pi k x)
  static CosineSeries cosine(double amplitude, int k = 1) {
    std::vector<double> c(static_cast<std::size_t>(k) + 1, 0.0);
    c[static_cast<std::size_t>(k)] = amplitude;
    return CosineSeries(std::move(c));
  }

  /// amplitude * sin(2 pi k x)
  static CosineSeries sine(double amplitude, int k = 1) {
    std::vector<double> s(static_cast<std::size_t>(k), 0.0);
    s[static_cast<std::size_t>(k) - 1] = amplitude;
    return CosineSeries({0.0}, std::move(s));
  }

  const std::vector<double>& cos_coeffs() const noexcept { return cos_; }
  const std::vector<double>& sin_coeffs() const noexcept { return sin_; }

  /// Highest frequency present (0 for a constant).
  int max_mode() const noexcept { return static_cast<int>(cos_.size()) - 1; }

  double a(int k) const { return k < static_cast<int>(cos_.size()) ? cos_[static_cast<std::size_t>(k)] : 0.0; }
  double b(int k) const {
    return k >= 1 && k <= static_cast<int>(sin_.size()) ? sin_[static_cast<std::size_t>(k) - 1] : 0.0;
  }

  bool is_zero() const {
    return std::all_of(cos_.begin(), cos_.end(), [](double c) { return c == 0.0; }) &&
           std::all_of(sin_.begin(), sin_.end(), [](double s) { return s == 0.0; });
  }

  bool is_constant() const { return max_mode() == 0; }

  bool is_even() const {
    return std::all_of(sin_.begin(), sin_.end(), [](double s) { return s == 0.0; });
  }

  /// Fourier coefficient \hat U(k) = \int_T U(x) e^{-2 pi i k x} dx.
  std::complex<double> fourier(int k) const {
    if (k == 0) return cos_[0];
    const int m = std::abs(k);
    const std::complex<double> c{0.5 * a(m), -0.5 * b(m)};
    return k > 0 ? c : std::conj(c);
  }

  PotentialEval eval(double x) const {
    x = wrap_unit(x);
    PotentialEval out{cos_[0], 0.0, 0.0};
    // Angle-addition recurrence keeps this to one sin/cos pair per call.
    const double c1 = std::cos(two_pi * x);
    const double s1 = std::sin(two_pi * x);
    double ck = 1.0, sk = 0.0;
    for (int k = 1; k <= max_mode(); ++k) {
      const double c = ck * c1 - sk * s1;
      sk = sk * c1 + ck * s1;
      ck = c;
      const double w = two_pi * k;
      const double ak = cos_[static_cast<std::size_t>(k)];
      const double bk = sin_[static_cast<std::size_t>(k) - 1];
      out.value += ak * ck + bk * sk;
      out.gradient += w * (-ak * sk + bk * ck);
      out.second_derivative += -w * w * (ak * ck + bk * sk);
    }
    return out;
  }

  double value(double x) const { return eval(x).value; }
  double derivative(double x) const { return eval(x).gradient; }
  double second_derivative(double x) const { return eval(x).second_derivative; }

  /// Values at x_j = j/n.
  std::vector<double> sample(std::size_t n) const {
    std::vector<double> out(n);
    for (std::size_t j = 0; j < n; ++j) out[j] = value(static_cast<double>(j) / static_cast<double>(n));
    return out;
  }

  /// Derivative series.
  CosineSeries derivative_series() const {
    std::vector<double> c(cos_.size(), 0.0), s(sin_.size(), 0.0);
    for (int k = 1; k <= max_mode(); ++k) {
      const double w = two_pi * k;
      c[static_cast<std::size_t>(k)] = w * b(k);
      s[static_cast<std::size_t>(k) - 1] = -w * a(k);
    }
    return CosineSeries(std::move(c), std::move(s));
  }

  /// The part invariant under x -> -x.
  CosineSeries even_part() const { return CosineSeries(cos_); }

  friend CosineSeries operator+(const CosineSeries& l, const CosineSeries& r) {
    const std::size_t k = static_cast<std::size_t>(std::max(l.max_mode(), r.max_mode()));
    std::vector<double> c(k + 1, 0.0), s(k, 0.0);
    for (std::size_t i = 0; i <= k; ++i) c[i] = l.a(static_cast<int>(i)) + r.a(static_cast<int>(i));
    for (std::size_t i = 1; i <= k; ++i) s[i - 1] = l.b(static_cast<int>(i)) + r.b(static_cast<int>(i));
    return CosineSeries(std::move(c), std::move(s));
  }

  friend CosineSeries operator*(double f, const CosineSeries& p) {
    auto c = p.cos_;
    auto s = p.sin_;
    for (auto& v : c) v *= f;
    for (auto& v : s) v *= f;
    return CosineSeries(std::move(c), std::move(s));
  }

  friend bool operator==(const CosineSeries&, const CosineSeries&) = default;

 private:
  void trim() {
    while (cos_.size() > 1 && cos_.back() == 0.0 && sin_.back() == 0.0) {
      cos_.pop_back();
      sin_.pop_back();
    }
  }

  std::vector<double> cos_{0.0};
  std::vector<double> sin_;
};

inline void to_json(nlohmann::json& j, const CosineSeries& p) {
  j = nlohmann::json{{"cos", p.cos_coeffs()}, {"sin", p.sin_coeffs()}};
}

inline void from_json(const nlohmann::json& j, CosineSeries& p) {
  if (!j.is_object()) throw validation_error("potential must be an object {\"cos\": [...], \"sin\": [...]}");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "cos" && it.key() != "sin") throw validation_error("unknown potential key '" + it.key() + "'");
  }
  std::vector<double> c = j.value("cos", std::vector<double>{});
  std::vector<double> s = j.value("sin", std::vector<double>{});
  p = CosineSeries(std::move(c), std::move(s));
}

/// U' on a uniform periodic table with cubic Hermite interpolation from
/// exact U' and U'' at the nodes; for a series of degree K the error is
/// about (2 pi K)^5 max|a_k| / (384 nodes^4).
class TabulatedDerivative {
 public:
  explicit TabulatedDerivative(const CosineSeries& U, std::size_t nodes = 8192) : n_(nodes), d_(nodes + 1), dd_(nodes + 1) {
    for (std::size_t j = 0; j <= n_; ++j) {
      const auto e = U.eval(static_cast<double>(j % n_) / static_cast<double>(n_));
      d_[j] = e.gradient;
      dd_[j] = e.second_derivative / static_cast<double>(n_);
    }
  }

  double operator()(double x) const {
    const double pos = (x - std::floor(x)) * static_cast<double>(n_);
    const std::size_t i = std::min(static_cast<std::size_t>(pos), n_ - 1);
    const double t = pos - static_cast<double>(i);
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * d_[i] + (t3 - 2 * t2 + t) * dd_[i] + (3 * t2 - 2 * t3) * d_[i + 1] +
           (t3 - t2) * dd_[i + 1];
  }

 private:
  std::size_t n_;
  std::vector<double> d_, dd_;
};

/// Minimum of a periodic function: 4096-point grid, then ternary search on
/// the bracket around the best grid point.
inline double periodic_minimum(const std::function<double(double)>& f, std::size_t grid = 4096) {
  std::size_t best = 0;
  double best_val = f(0.0);
  const double h = 1.0 / static_cast<double>(grid);
  for (std::size_t i = 1; i < grid; ++i) {
    const double v = f(static_cast<double>(i) * h);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  double lo = (static_cast<double>(best) - 1.0) * h;
  double hi = (static_cast<double>(best) + 1.0) * h;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (f(m1) < f(m2))
      hi = m2;
    else
      lo = m1;
  }
  return std::min(best_val, f(0.5 * (lo + hi)));
}

inline double periodic_maximum(const std::function<double(double)>& f, std::size_t grid = 4096) {
  return -periodic_minimum([&](double x) { return -f(x); }, grid);
}

/// sup_x |U''(x)|
inline double sup_abs_second_derivative(const CosineSeries& p) {
  if (p.is_constant()) return 0.0;
  return periodic_maximum([&](double x) { return std::abs(p.second_derivative(x)); });
}

enum class HStability { stable, not_stable };

struct HStabilityReport {
  HStability classification = HStability::stable;
  /// Every k != 0 (both signs) whose Fourier coefficient is not a
  /// nonnegative real.
  std::vector<int> offending_modes;

  bool stable() const { return classification == HStability::stable; }
};

/// W is H-stable iff \hat W(k) >= 0 for every k != 0.
inline HStabilityReport h_stability(const CosineSeries& w) {
  HStabilityReport r;
  for (int k = 1; k <= w.max_mode(); ++k) {
    const auto c = w.fourier(k);
    const bool ok = c.real() >= 0.0 && c.imag() == 0.0;
    if (!ok) {
      r.offending_modes.push_back(-k);
      r.offending_modes.push_back(k);
    }
  }
  std::sort(r.offending_modes.begin(), r.offending_modes.end());
  if (!r.offending_modes.empty()) r.classification = HStability::not_stable;
  return r;
}

/// Confinement V, interaction W, N particles at inverse temperature beta.
struct Hamiltonian {
  CosineSeries V;
  CosineSeries W;
  std::size_t N = 1;
  double beta = 1.0;
};

/// H(x) = sum_i V(x_i) + (1/2N) sum_i sum_{j != i} W(x_i - x_j); direct
/// O(N^2) pair sum on quotiented coordinates.
inline double hamiltonian_energy(const Hamiltonian& h, std::span<const double> positions) {
  if (positions.size() != h.N) throw validation_error("positions length does not match N");
  double confinement = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < h.N; ++i) {
    confinement += h.V.value(wrap_unit(positions[i]));
    for (std::size_t j = 0; j < h.N; ++j) {
      if (j != i) pairs += h.W.value(wrap_unit(positions[i] - positions[j]));
    }
  }
  return confinement + pairs / (2.0 * static_cast<double>(h.N));
}

/// kappa = min(inf V'' + inf W'', 0).
inline double semiconvexity_kappa(const CosineSeries& V, const CosineSeries& W) {
  auto inf_second = [](const CosineSeries& p) {
    if (p.is_constant()) return 0.0;
    return periodic_minimum([&](double x) { return p.second_derivative(x); });
  };
  return std::min(inf_second(V) + inf_second(W), 0.0);
}

}  // namespace mvlab
