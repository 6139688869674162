#pragma once

// N-particle systems on the torus: Euler-Maruyama for the interacting and
// frozen-field SDEs, a MALA sampler for the Gibbs measure, fluctuation-mode
// statistics, mean-squared-displacement diffusivity and small-N partition
// functions.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mvlab/density.hpp"
#include "mvlab/errors.hpp"
#include "mvlab/parallel.hpp"
#include "mvlab/potentials.hpp"
#include "mvlab/rng.hpp"
#include "mvlab/stationary.hpp"
#include "mvlab/stats.hpp"

namespace mvlab {

inline constexpr std::size_t max_particles = 4096;

/// Positions are line (unwrapped) coordinates; quotient(i) is the torus view.
struct ParticleEnsemble {
  std::vector<double> positions;
  std::size_t N = 0;
  double beta = 1.0;
  std::uint64_t seed = 0;
  double time = 0.0;
  /// Noise source; carries the replica id and its position in the stream.
  Stream rng{0, 0};

  double quotient(std::size_t i) const { return wrap_unit(positions[i]); }

  /// N i.i.d. draws from nu, using stream `replica` of `seed`.
  static ParticleEnsemble sample(const DensityField& nu, std::size_t N, double beta, std::uint64_t seed,
                                 std::uint64_t replica = 0) {
    return sample(QuantileTable(nu), N, beta, seed, replica);
  }

  static ParticleEnsemble sample(const QuantileTable& q, std::size_t N, double beta, std::uint64_t seed,
                                 std::uint64_t replica = 0) {
    auto e = with_positions(std::vector<double>(N), beta, seed, replica);
    for (auto& x : e.positions) x = wrap_unit(q.quantile(e.rng.uniform()));
    return e;
  }

  static ParticleEnsemble with_positions(std::vector<double> x, double beta, std::uint64_t seed,
                                         std::uint64_t replica = 0) {
    if (x.empty() || x.size() > max_particles) throw validation_error("N must lie in [1, 4096]");
    if (!(beta > 0.0)) throw validation_error("beta must be positive");
    ParticleEnsemble e;
    e.N = x.size();
    e.positions = std::move(x);
    e.beta = beta;
    e.seed = seed;
    e.rng = Stream(seed, replica);
    return e;
  }
};

/// grad_i H = V'(x_i) + (1/N) sum_{j != i} W'(x_i - x_j) and
/// H = sum_i V(x_i) + (1/2N) sum_{i != j} W(x_i - x_j). Trigonometric W of
/// low degree goes through the order parameters S_k = sum_j e^{2 pi i k x_j};
/// otherwise pairs are summed directly.
class PairInteraction {
 public:
  static constexpr int shortcut_max_mode = 16;

  PairInteraction(CosineSeries V, CosineSeries W, std::size_t N, bool allow_shortcut = true)
      : V_(std::move(V)), W_(std::move(W)), N_(N) {
    K_ = W_.max_mode();
    shortcut_ = allow_shortcut && K_ <= shortcut_max_mode;
    w_prime_zero_ = W_.derivative(0.0);
    w_zero_ = W_.value(0.0);
    if (shortcut_) {
      phases_.resize(N_ * static_cast<std::size_t>(K_));
      S_.resize(static_cast<std::size_t>(K_));
    }
  }

  bool uses_shortcut() const { return shortcut_; }
  const CosineSeries& V() const { return V_; }
  const CosineSeries& W() const { return W_; }

  void gradient(std::span<const double> x, std::span<double> out) {
    check(x);
    for (std::size_t i = 0; i < N_; ++i) out[i] = V_.is_constant() ? 0.0 : V_.derivative(x[i]);
    if (K_ == 0) return;
    const double inv_n = 1.0 / static_cast<double>(N_);
    if (!shortcut_) {
      for (std::size_t i = 0; i < N_; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < N_; ++j)
          if (j != i) s += W_.derivative(x[i] - x[j]);
        out[i] += s * inv_n;
      }
      return;
    }
    order_parameters(x);
    for (std::size_t i = 0; i < N_; ++i) {
      double s = 0.0;
      for (int k = 1; k <= K_; ++k) {
        const auto z = phases_[i * K_ + k - 1] * std::conj(S_[k - 1]);
        s += two_pi * k * (-W_.a(k) * z.imag() + W_.b(k) * z.real());
      }
      out[i] += (s - w_prime_zero_) * inv_n;
    }
  }

  double energy(std::span<const double> x) {
    check(x);
    double h = 0.0;
    if (!V_.is_constant())
      for (double xi : x) h += V_.value(xi);
    else
      h += V_.a(0) * static_cast<double>(N_);
    if (W_.is_zero()) return h;
    const double n = static_cast<double>(N_);
    double pairs = 0.0;
    if (!shortcut_) {
      for (std::size_t i = 0; i < N_; ++i)
        for (std::size_t j = 0; j < N_; ++j)
          if (j != i) pairs += W_.value(x[i] - x[j]);
    } else {
      order_parameters(x);
      // Sine terms cancel in the symmetric double sum.
      pairs = W_.a(0) * n * n - n * w_zero_;
      for (int k = 1; k <= K_; ++k) pairs += W_.a(k) * std::norm(S_[k - 1]);
    }
    return h + pairs / (2.0 * n);
  }

 private:
  void check(std::span<const double> x) const {
    if (x.size() != N_) throw validation_error("positions length does not match N");
  }

  void order_parameters(std::span<const double> x) {
    std::fill(S_.begin(), S_.end(), std::complex<double>{});
    for (std::size_t i = 0; i < N_; ++i) {
      const auto z1 = std::polar(1.0, two_pi * wrap_unit(x[i]));
      auto z = z1;
      for (int k = 1; k <= K_; ++k) {
        phases_[i * K_ + k - 1] = z;
        S_[k - 1] += z;
        z *= z1;
      }
    }
  }

  CosineSeries V_, W_;
  std::size_t N_;
  int K_ = 0;
  bool shortcut_ = false;
  double w_prime_zero_ = 0.0, w_zero_ = 0.0;
  std::vector<std::complex<double>> phases_, S_;
};

// ---------------------------------------------------------------------------
// SDE simulation.

struct SdeOptions {
  double dt = 1e-3;
  double t_final = 1.0;
  /// Record every `record_stride` steps; step 0 and the last step are
  /// always recorded.
  std::size_t record_stride = 1;
};

/// Recorded line positions, frames x N, row-major.
struct Trajectory {
  std::size_t N = 0;
  std::vector<double> times;
  std::vector<double> positions;

  std::size_t frames() const { return times.size(); }
  std::span<const double> frame(std::size_t f) const { return std::span<const double>(positions).subspan(f * N, N); }
};

namespace detail {

inline double sup_second(const CosineSeries& p) { return p.is_constant() ? 0.0 : sup_abs_second_derivative(p); }

}  // namespace detail

/// Euler-Maruyama with drift -V'(x_i) - (1/N) sum_{j != i} W'(x_i - x_j),
/// or, with a frozen mean field nu, -(V + W * nu)'(x_i) (tabulated, see
/// TabulatedDerivative); noise sqrt(2/beta).
/// Requires dt * (Lipschitz bound of the drift) < 0.1. Advances `ens` in
/// place.
inline Trajectory simulate_sde(ParticleEnsemble& ens, const CosineSeries& V, const CosineSeries& W,
                               const SdeOptions& opt, const DensityField* mean_field = nullptr) {
  if (!(opt.dt > 0.0) || !(opt.t_final >= 0.0)) throw validation_error("need dt > 0 and t_final >= 0");
  if (opt.record_stride == 0) throw validation_error("record_stride must be positive");
  std::optional<CosineSeries> frozen;
  double lipschitz = 0.0;
  if (mean_field) {
    frozen = mean_field_potential(*mean_field, V, W);
    lipschitz = detail::sup_second(*frozen);
  } else {
    lipschitz = detail::sup_second(V) + detail::sup_second(W);
  }
  if (opt.dt * lipschitz >= 0.1) {
    throw validation_error("dt * Lipschitz(drift) = " + std::to_string(opt.dt * lipschitz) + " must be < 0.1");
  }
  const std::size_t N = ens.N;
  const std::size_t steps =
      opt.t_final == 0.0 ? 0 : static_cast<std::size_t>(std::ceil(opt.t_final / opt.dt - 1e-9));
  const double dt = steps ? opt.t_final / static_cast<double>(steps) : opt.dt;
  const double noise = std::sqrt(2.0 * dt / ens.beta);

  Trajectory tr;
  tr.N = N;
  auto record = [&] {
    tr.times.push_back(ens.time);
    tr.positions.insert(tr.positions.end(), ens.positions.begin(), ens.positions.end());
  };
  record();

  std::optional<PairInteraction> pair;
  std::optional<TabulatedDerivative> drift;
  if (frozen)
    drift.emplace(*frozen);
  else
    pair.emplace(V, W, N);
  std::vector<double> grad(N);
  const double t0 = ens.time;
  for (std::size_t s = 1; s <= steps; ++s) {
    if (frozen) {
      for (std::size_t i = 0; i < N; ++i) grad[i] = (*drift)(ens.positions[i]);
    } else {
      pair->gradient(ens.positions, grad);
    }
    for (std::size_t i = 0; i < N; ++i) ens.positions[i] += -grad[i] * dt + noise * ens.rng.normal();
    ens.time = t0 + static_cast<double>(s) * dt;
    if (s % opt.record_stride == 0 || s == steps) record();
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Gibbs sampling.

/// log pi = -beta H on lifted coordinates, with the even part of W (the odd
/// part does not enter H).
class GibbsTarget {
 public:
  GibbsTarget(const CosineSeries& V, const CosineSeries& W, std::size_t N, double beta)
      : interaction_(V, W.even_part(), N), beta_(beta), N_(N) {}

  std::size_t N() const { return N_; }
  double beta() const { return beta_; }
  double log_density(std::span<const double> x) { return -beta_ * interaction_.energy(x); }
  void grad_log_density(std::span<const double> x, std::span<double> out) {
    interaction_.gradient(x, out);
    for (auto& g : out) g *= -beta_;
  }

 private:
  PairInteraction interaction_;
  double beta_;
  std::size_t N_;
};

/// log of pi(y) q(x | y) / (pi(x) q(y | x)) for the MALA proposal
/// y = x + h grad log pi(x) + sqrt(2h) xi.
inline double mala_log_ratio(GibbsTarget& target, std::span<const double> x, std::span<const double> y, double h) {
  const std::size_t n = x.size();
  std::vector<double> gx(n), gy(n);
  target.grad_log_density(x, gx);
  target.grad_log_density(y, gy);
  double fwd = 0.0, bwd = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = y[i] - x[i] - h * gx[i];
    const double b = x[i] - y[i] - h * gy[i];
    fwd += a * a;
    bwd += b * b;
  }
  return target.log_density(y) - target.log_density(x) + (fwd - bwd) / (4.0 * h);
}

struct GibbsOptions {
  std::size_t n_samples = 1000;
  std::size_t thinning = 10;
  std::size_t burn_in = 5000;
  /// Initial MALA step h; tuned during burn-in towards target_acceptance.
  double step = 1e-3;
  double max_step = 0.5;
  double target_acceptance = 0.6;
  std::uint64_t seed = 0;
  /// Independent chains, run replica-parallel and concatenated in order.
  std::size_t chains = 1;
};

struct GibbsResult {
  std::size_t N = 0;
  double beta = 1.0;
  std::size_t chains = 1;
  /// Quotient configurations, (chains * n_samples) x N, chain-major.
  std::vector<double> samples;
  /// Post-burn-in acceptance over all chains.
  double acceptance = 0.0;
  /// Tuned step per chain.
  std::vector<double> steps;

  std::size_t count() const { return N ? samples.size() / N : 0; }
  std::span<const double> sample(std::size_t s) const { return std::span<const double>(samples).subspan(s * N, N); }
};

/// Metropolis-adjusted Langevin chain(s) targeting M_N ~ exp(-beta H). The
/// chain lives on lifted coordinates; H and the proposal kernel are
/// translation-equivariant, so its torus projection is reversible for M_N.
/// Throws statistical_error if the post-tuning acceptance leaves [0.1, 0.95].
inline GibbsResult gibbs_sample(std::size_t N, const CosineSeries& V, const CosineSeries& W, double beta,
                                const GibbsOptions& opt) {
  if (N == 0 || N > max_particles) throw validation_error("N must lie in [1, 4096]");
  if (!(beta > 0.0)) throw validation_error("beta must be positive");
  if (opt.thinning == 0 || opt.chains == 0 || !(opt.step > 0.0)) throw validation_error("invalid sampler options");
  GibbsResult res;
  res.N = N;
  res.beta = beta;
  res.chains = opt.chains;
  res.samples.resize(opt.chains * opt.n_samples * N);
  res.steps.resize(opt.chains);
  std::vector<std::size_t> accepted(opt.chains, 0);

  parallel_for(opt.chains, [&](std::size_t c) {
    GibbsTarget target(V, W, N, beta);
    Stream rng(opt.seed, c);
    std::vector<double> x(N), y(N), gx(N), gy(N);
    for (auto& v : x) v = rng.uniform();
    double lx = target.log_density(x);
    target.grad_log_density(x, gx);
    double h = std::min(opt.step, opt.max_step);

    auto step = [&]() {
      const double sq = std::sqrt(2.0 * h);
      for (std::size_t i = 0; i < N; ++i) y[i] = x[i] + h * gx[i] + sq * rng.normal();
      const double ly = target.log_density(y);
      target.grad_log_density(y, gy);
      double fwd = 0.0, bwd = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        const double a = y[i] - x[i] - h * gx[i];
        const double b = x[i] - y[i] - h * gy[i];
        fwd += a * a;
        bwd += b * b;
      }
      const double log_ratio = ly - lx + (fwd - bwd) / (4.0 * h);
      const bool accept = log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio;
      if (accept) {
        x.swap(y);
        gx.swap(gy);
        lx = ly;
        // Keep lifted coordinates bounded without changing the torus state.
        for (auto& v : x) v -= std::floor(v);
      }
      return accept;
    };

    for (std::size_t t = 0; t < opt.burn_in; ++t) {
      const double a = step() ? 1.0 : 0.0;
      const double gain = 1.0 / std::pow(static_cast<double>(t) + 10.0, 0.6);
      h = std::clamp(h * std::exp(gain * (a - opt.target_acceptance)), 1e-12, opt.max_step);
    }
    res.steps[c] = h;
    for (std::size_t s = 0; s < opt.n_samples; ++s) {
      for (std::size_t t = 0; t < opt.thinning; ++t) accepted[c] += step() ? 1 : 0;
      double* out = res.samples.data() + (c * opt.n_samples + s) * N;
      for (std::size_t i = 0; i < N; ++i) out[i] = wrap_unit(x[i]);
    }
  });

  const double total = static_cast<double>(opt.chains * opt.n_samples * opt.thinning);
  std::size_t acc = 0;
  for (auto a : accepted) acc += a;
  res.acceptance = total > 0.0 ? static_cast<double>(acc) / total : 0.0;
  if (total > 0.0 && (res.acceptance < 0.1 || res.acceptance > 0.95)) {
    throw statistical_error("MALA acceptance " + std::to_string(res.acceptance) + " outside [0.1, 0.95]");
  }
  return res;
}

// ---------------------------------------------------------------------------
// Fluctuations.

/// e_k = sqrt(2) sin(2 pi k x) for k > 0, 1 for k = 0, sqrt(2) cos(2 pi k x)
/// for k < 0.
inline double fourier_basis(int k, double x) {
  if (k == 0) return 1.0;
  const double th = two_pi * static_cast<double>(k) * x;
  return k > 0 ? std::sqrt(2.0) * std::sin(th) : std::sqrt(2.0) * std::cos(th);
}

/// \int e_k dnu from the modes of nu.
inline double basis_expectation(int k, const DensityField& nu) {
  if (k == 0) return 1.0;
  const auto m = nu.mode(std::abs(k));
  // \int cos(2 pi k x) nu = Re nu_k, \int sin(2 pi k x) nu = -Im nu_k.
  return k > 0 ? -std::sqrt(2.0) * m.imag() : std::sqrt(2.0) * m.real();
}

struct FluctuationSample {
  int mode_index = 0;
  std::vector<double> projections;
  std::size_t N = 0;
  double beta = 1.0;
  double variance = 0.0;
  /// Batch-means standard error of the variance estimate.
  double standard_error = 0.0;
  double effective_samples = 0.0;
};

/// <G^N, e_k> = sqrt(N) (N^{-1} sum_i e_k(x_i) - \int e_k dnu) for every
/// sample, with the empirical variance and its batch-means error.
inline std::vector<FluctuationSample> fluctuation_modes(const GibbsResult& samples, std::span<const int> k_list,
                                                        const DensityField& reference) {
  std::vector<FluctuationSample> out;
  const std::size_t S = samples.count();
  const double n = static_cast<double>(samples.N);
  for (int k : k_list) {
    FluctuationSample f;
    f.mode_index = k;
    f.N = samples.N;
    f.beta = samples.beta;
    f.projections.resize(S);
    const double ref = basis_expectation(k, reference);
    for (std::size_t s = 0; s < S; ++s) {
      double acc = 0.0;
      for (double x : samples.sample(s)) acc += fourier_basis(k, x);
      f.projections[s] = std::sqrt(n) * (acc / n - ref);
    }
    const double m = stats::mean(f.projections);
    std::vector<double> sq(S);
    for (std::size_t s = 0; s < S; ++s) sq[s] = (f.projections[s] - m) * (f.projections[s] - m);
    const auto bm = stats::batch_means(sq);
    f.variance = stats::variance(f.projections);
    f.standard_error = bm.standard_error;
    f.effective_samples = stats::batch_means(f.projections).effective_samples;
    out.push_back(std::move(f));
  }
  return out;
}

struct Estimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// E <W(x - y), G^N (x) G^N> per sample: for W = sum a_k cos + b_k sin the
/// sine part cancels and each cosine mode contributes
/// (a_k / 2)(<G, e_k>^2 + <G, e_{-k}>^2).
inline Estimate interaction_fluctuation_energy(const GibbsResult& samples, const CosineSeries& W,
                                               const DensityField& reference) {
  const int K = W.max_mode();
  if (K == 0) return {};
  std::vector<int> ks;
  for (int k = 1; k <= K; ++k) {
    if (W.a(k) == 0.0) continue;
    ks.push_back(k);
    ks.push_back(-k);
  }
  if (ks.empty()) return {};
  const auto modes = fluctuation_modes(samples, ks, reference);
  const std::size_t S = samples.count();
  std::vector<double> per(S, 0.0);
  for (std::size_t m = 0; m < modes.size(); ++m) {
    const double a = 0.5 * W.a(std::abs(modes[m].mode_index));
    for (std::size_t s = 0; s < S; ++s) per[s] += a * modes[m].projections[s] * modes[m].projections[s];
  }
  const auto bm = stats::batch_means(per);
  return {bm.mean, bm.standard_error};
}

/// N^{-1} sum_j e^{2 pi i x_j}
inline std::complex<double> order_parameter(std::span<const double> x) {
  std::complex<double> s{};
  for (double v : x) s += std::polar(1.0, two_pi * v);
  return x.empty() ? s : s / static_cast<double>(x.size());
}

// ---------------------------------------------------------------------------
// Mean-squared displacement.

/// Squared displacements |X_t - X_0|^2, paths x times, row-major.
struct MsdPaths {
  std::vector<double> times;
  std::vector<double> squared_displacement;
  std::size_t paths = 0;
};

/// Single particles in the frozen field -(V + W * nu)', started from that
/// field's invariant density exp(-beta (V + W * nu)) / Z; path p uses stream p.
inline MsdPaths frozen_field_msd(const DensityField& nu, const CosineSeries& V, const CosineSeries& W, double beta,
                                 std::size_t paths, double dt, double t_final, std::size_t record_stride,
                                 std::uint64_t seed) {
  if (paths == 0) throw validation_error("need at least one path");
  if (record_stride == 0) throw validation_error("record_stride must be positive");
  const auto U = mean_field_potential(nu, V, W);
  const QuantileTable start(DensityField::gibbs(U, beta, nu.grid_size()));
  // Same step count, step size and noise order as simulate_sde with N = 1,
  // so path p here equals simulate_sde on stream p of the same seed.
  const double lipschitz = detail::sup_second(U);
  if (dt * lipschitz >= 0.1) {
    throw validation_error("dt * Lipschitz(drift) = " + std::to_string(dt * lipschitz) + " must be < 0.1");
  }
  const std::size_t steps = t_final == 0.0 ? 0 : static_cast<std::size_t>(std::ceil(t_final / dt - 1e-9));
  const double h = steps ? t_final / static_cast<double>(steps) : dt;
  const double noise = std::sqrt(2.0 * h / beta);
  const TabulatedDerivative drift(U);
  MsdPaths out;
  out.paths = paths;
  for (std::size_t s = 0; s <= steps; ++s)
    if (s % record_stride == 0 || s == steps) out.times.push_back(static_cast<double>(s) * h);
  const std::size_t F = out.times.size();
  out.squared_displacement.assign(paths * F, 0.0);

  // Paths advance in blocks so independent updates overlap in the pipeline.
  constexpr std::size_t block = 16;
  const std::size_t blocks = (paths + block - 1) / block;
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t first = b * block;
    const std::size_t count = std::min(block, paths - first);
    std::vector<Stream> rng;
    std::vector<double> x(count), x0(count);
    for (std::size_t p = 0; p < count; ++p) {
      rng.emplace_back(seed, first + p);
      x[p] = x0[p] = wrap_unit(start.quantile(rng[p].uniform()));
    }
    std::size_t f = 1;
    for (std::size_t s = 1; s <= steps; ++s) {
      for (std::size_t p = 0; p < count; ++p) x[p] += -drift(x[p]) * h + noise * rng[p].normal();
      if (s % record_stride == 0 || s == steps) {
        for (std::size_t p = 0; p < count; ++p) {
          const double d = x[p] - x0[p];
          out.squared_displacement[(first + p) * F + f] = d * d;
        }
        ++f;
      }
    }
  });
  return out;
}

/// Squared displacements of one tagged particle across trajectories.
inline MsdPaths msd_paths(std::span<const Trajectory> trajectories, std::size_t particle = 0) {
  if (trajectories.empty()) throw validation_error("no trajectories");
  MsdPaths out;
  out.paths = trajectories.size();
  out.times = trajectories.front().times;
  for (const auto& tr : trajectories) {
    if (tr.frames() != out.times.size() || particle >= tr.N) throw validation_error("trajectory shape mismatch");
    const double x0 = tr.frame(0)[particle];
    for (std::size_t f = 0; f < tr.frames(); ++f) {
      const double d = tr.frame(f)[particle] - x0;
      out.squared_displacement.push_back(d * d);
    }
  }
  return out;
}

struct MsdFit {
  double A_hat = 0.0;
  double standard_error = 0.0;
  double fit_r2 = 0.0;
  /// fit_r2 >= 0.99
  bool diffusive = false;
};

/// Least squares of mean |X_t - X_0|^2 = 2 A t through the origin over
/// t in [T/2, T]; the error comes from the spread of per-path slopes.
inline MsdFit msd_diffusivity(const MsdPaths& m) {
  const std::size_t F = m.times.size();
  if (F < 3 || m.paths == 0) throw validation_error("need at least three recorded times");
  const double T = m.times.back();
  std::vector<std::size_t> window;
  for (std::size_t f = 0; f < F; ++f)
    if (m.times[f] >= 0.5 * T && m.times[f] > 0.0) window.push_back(f);
  if (window.size() < 2) throw validation_error("too few recorded times in [T/2, T]");
  double stt = 0.0;
  for (auto f : window) stt += m.times[f] * m.times[f];

  std::vector<double> slopes(m.paths);
  std::vector<double> mean_sq(F, 0.0);
  for (std::size_t p = 0; p < m.paths; ++p) {
    const double* row = m.squared_displacement.data() + p * F;
    double sty = 0.0;
    for (auto f : window) sty += m.times[f] * row[f];
    slopes[p] = sty / (2.0 * stt);
    for (std::size_t f = 0; f < F; ++f) mean_sq[f] += row[f];
  }
  for (auto& v : mean_sq) v /= static_cast<double>(m.paths);

  MsdFit fit;
  fit.A_hat = stats::mean(slopes);
  fit.standard_error = std::sqrt(stats::variance(slopes) / static_cast<double>(m.paths));
  double ybar = 0.0;
  for (auto f : window) ybar += mean_sq[f];
  ybar /= static_cast<double>(window.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (auto f : window) {
    const double r = mean_sq[f] - 2.0 * fit.A_hat * m.times[f];
    ss_res += r * r;
    ss_tot += (mean_sq[f] - ybar) * (mean_sq[f] - ybar);
  }
  fit.fit_r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
  fit.diffusive = fit.fit_r2 >= 0.99;
  return fit;
}

// ---------------------------------------------------------------------------
// Partition functions.

/// Z_N = \int_{T^N} exp(-beta ((1/2N) sum_{i != j} W(x_i - x_j) + sum_i V(x_i)))
/// by the tensor trapezoid rule, N in {1, 2, 3}.
inline double partition_function_small_n(std::size_t N, const CosineSeries& V, const CosineSeries& W, double beta,
                                         std::size_t points = 256) {
  if (N < 1 || N > 3) throw validation_error("partition_function_small_n needs N in {1, 2, 3}");
  if (!(beta > 0.0)) throw validation_error("beta must be positive");
  const std::size_t n = points;
  const double h = 1.0 / static_cast<double>(n);
  std::vector<double> ev(n), ew(n);
  const auto We = W.even_part();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i) * h;
    ev[i] = std::exp(-beta * V.value(x));
    // Each unordered pair appears twice in the double sum: weight 1/N.
    ew[i] = std::exp(-beta * We.value(x) / static_cast<double>(N));
  }
  auto pw = [&](std::size_t i, std::size_t j) { return ew[(i + n - j) % n]; };
  double z = 0.0;
  if (N == 1) {
    for (double v : ev) z += v;
    return z * h;
  }
  if (N == 2) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) z += ev[i] * ev[j] * pw(i, j);
    return z * h * h;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a = ev[i] * ev[j] * pw(i, j);
      double inner = 0.0;
      for (std::size_t k = 0; k < n; ++k) inner += ev[k] * pw(i, k) * pw(j, k);
      z += a * inner;
    }
  }
  return z * h * h * h;
}

}  // namespace mvlab
