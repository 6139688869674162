#pragma once

// Thin FFTW3 wrapper for real periodic data on the unit torus.
//
// Convention: for samples x_j = f(j/n), forward() returns the half spectrum
//   c_k = (1/n) sum_j x_j exp(-2 pi i k j / n),   k = 0..n/2,
// which is the trapezoid approximation of the Fourier coefficient
// \int_0^1 f(x) e^{-2 pi i k x} dx. inverse() is the exact inverse.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "mvlab/errors.hpp"

namespace mvlab::fft {

namespace detail {

struct plan_pair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

// Plans live for the life of the process; one pair per size.
inline plan_pair plans_for(std::size_t n) {
  static std::map<std::size_t, plan_pair> cache;
  std::lock_guard lock(planner_mutex());
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
  plan_pair p;
  const int size = static_cast<int>(n);
  p.forward = fftw_plan_dft_r2c_1d(size, in, out, FFTW_ESTIMATE);
  p.inverse = fftw_plan_dft_c2r_1d(size, out, in, FFTW_ESTIMATE);
  fftw_free(in);
  fftw_free(out);
  cache.emplace(n, p);
  return p;
}

struct fftw_deleter {
  void operator()(void* p) const noexcept { fftw_free(p); }
};

}  // namespace detail

/// Reusable transform of fixed size n. One instance per thread; the plan is
/// shared and executed through FFTW's thread-safe new-array interface.
class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n),
        plans_(detail::plans_for(n)),
        real_(fftw_alloc_real(n)),
        spec_(fftw_alloc_complex(n / 2 + 1)) {
    if (n < 2 || n % 2 != 0) throw validation_error("fft size must be even and >= 2");
  }

  std::size_t size() const noexcept { return n_; }

  /// Half spectrum (n/2 + 1 coefficients), normalised by 1/n.
  void forward(std::span<const double> x, std::span<std::complex<double>> out) {
    std::copy(x.begin(), x.end(), real_.get());
    fftw_execute_dft_r2c(plans_.forward, real_.get(), spec_.get());
    const double scale = 1.0 / static_cast<double>(n_);
    for (std::size_t k = 0; k <= n_ / 2; ++k) {
      out[k] = {spec_.get()[k][0] * scale, spec_.get()[k][1] * scale};
    }
  }

  /// Samples from modes k = 0..modes.size()-1; missing high modes are zero.
  /// The imaginary part of the k = 0 and Nyquist modes is ignored.
  void inverse(std::span<const std::complex<double>> modes, std::span<double> out) {
    const std::size_t half = n_ / 2;
    for (std::size_t k = 0; k <= half; ++k) {
      const auto c = k < modes.size() ? modes[k] : std::complex<double>{};
      spec_.get()[k][0] = c.real();
      spec_.get()[k][1] = (k == 0 || k == half) ? 0.0 : c.imag();
    }
    fftw_execute_dft_c2r(plans_.inverse, spec_.get(), real_.get());
    std::copy(real_.get(), real_.get() + n_, out.begin());
  }

 private:
  std::size_t n_;
  detail::plan_pair plans_;
  std::unique_ptr<double, detail::fftw_deleter> real_;
  std::unique_ptr<fftw_complex, detail::fftw_deleter> spec_;
};

inline RealFft& thread_local_fft(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<RealFft>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

inline std::vector<std::complex<double>> forward(std::span<const double> x) {
  std::vector<std::complex<double>> out(x.size() / 2 + 1);
  thread_local_fft(x.size()).forward(x, out);
  return out;
}

inline std::vector<double> inverse(std::span<const std::complex<double>> modes, std::size_t n) {
  std::vector<double> out(n);
  thread_local_fft(n).inverse(modes, out);
  return out;
}

}  // namespace mvlab::fft
