#pragma once

// Statistics helpers for the stochastic modules: batch-means errors,
// chi-squared and Kolmogorov-Smirnov tests.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "mvlab/errors.hpp"

namespace mvlab::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Unbiased sample variance.
inline double variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

struct BatchMeans {
  double mean = 0.0;
  double standard_error = 0.0;
  /// n * var / (batch_size * var(batch means)), capped at n.
  double effective_samples = 0.0;
};

/// Batch-means error of the mean of a correlated series, with
/// floor(sqrt(n)) batches.
inline BatchMeans batch_means(std::span<const double> x) {
  BatchMeans r;
  const std::size_t n = x.size();
  r.mean = mean(x);
  if (n < 4) return r;
  const std::size_t batches = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  const std::size_t size = n / batches;
  std::vector<double> bm(batches);
  for (std::size_t b = 0; b < batches; ++b) bm[b] = mean(x.subspan(b * size, size));
  const double vb = variance(bm);
  r.standard_error = std::sqrt(vb / static_cast<double>(batches));
  const double v = variance(x);
  r.effective_samples = vb > 0.0 ? std::min(static_cast<double>(n), v / vb * static_cast<double>(batches))
                                 : static_cast<double>(n);
  return r;
}

/// Pearson chi-squared p-value of counts against expected cell masses.
inline double chi_squared_p_value(std::span<const double> observed, std::span<const double> expected) {
  if (observed.size() != expected.size() || observed.size() < 2) throw validation_error("chi-squared shape mismatch");
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double d = observed[i] - expected[i];
    stat += d * d / expected[i];
  }
  boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

/// Asymptotic Kolmogorov survival function Q(lambda).
inline double kolmogorov_survival(double lambda) {
  if (lambda < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

/// Two-sample Kolmogorov-Smirnov p-value (asymptotic, Stephens correction).
inline double ks_two_sample_p_value(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw validation_error("empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d);
}

/// One-sample KS p-value against a continuous CDF.
template <typename Cdf>
double ks_one_sample_p_value(std::vector<double> x, Cdf&& cdf) {
  if (x.empty()) throw validation_error("empty sample");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  const double ne = std::sqrt(n);
  return kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d);
}

}  // namespace mvlab::stats
