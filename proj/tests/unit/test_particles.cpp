#include <cmath>
#include <cstdlib>
#include <numbers>

#include <boost/math/special_functions/bessel.hpp>
#include <gtest/gtest.h>

#include "mvlab/errors.hpp"
#include "mvlab/homogenize.hpp"
#include "mvlab/particles.hpp"
#include "mvlab/stationary.hpp"
#include "mvlab/stats.hpp"

using namespace mvlab;

namespace {

const double pi = std::numbers::pi;
const auto kuramoto = CosineSeries::cosine(-1.0);

std::vector<double> random_positions(std::size_t N, std::uint64_t seed) {
  Stream s(seed, 99);
  std::vector<double> x(N);
  for (auto& v : x) v = 3.0 * s.uniform() - 1.0;
  return x;
}

// Direct pair sums on quotient coordinates.
double direct_energy(const CosineSeries& V, const CosineSeries& W, std::span<const double> x) {
  const double N = static_cast<double>(x.size());
  double e = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e += V.value(x[i]);
    for (std::size_t j = 0; j < x.size(); ++j)
      if (i != j) e += W.value(x[i] - x[j]) / (2.0 * N);
  }
  return e;
}

std::vector<double> bin_counts(const GibbsResult& g, std::size_t coord, std::size_t bins) {
  std::vector<double> c(bins, 0.0);
  for (std::size_t s = 0; s < g.count(); ++s) c[std::min(bins - 1, static_cast<std::size_t>(g.sample(s)[coord] * bins))] += 1.0;
  return c;
}

class ThreadsEnv {
 public:
  explicit ThreadsEnv(const char* n) {
    if (const char* old = std::getenv("MVLAB_THREADS")) saved_ = old;
    setenv("MVLAB_THREADS", n, 1);
  }
  ~ThreadsEnv() {
    if (saved_.empty())
      unsetenv("MVLAB_THREADS");
    else
      setenv("MVLAB_THREADS", saved_.c_str(), 1);
  }

 private:
  std::string saved_;
};

}  // namespace

TEST(Ensemble, SampleIsQuotientAndMatchesDensity) {
  const auto nu = DensityField::von_mises(2.0);
  const auto e = ParticleEnsemble::sample(nu, 4000, 1.0, 5);
  std::vector<double> x;
  for (std::size_t i = 0; i < e.N; ++i) {
    ASSERT_GE(e.quotient(i), 0.0);
    ASSERT_LT(e.quotient(i), 1.0);
    x.push_back(e.positions[i]);
  }
  const QuantileTable q(nu);
  EXPECT_GT(stats::ks_one_sample_p_value(x, [&](double v) { return q.cdf_at(v); }), 0.01);
  EXPECT_THROW(ParticleEnsemble::with_positions({}, 1.0, 0), validation_error);
  EXPECT_THROW(ParticleEnsemble::with_positions({0.1}, 0.0, 0), validation_error);
  EXPECT_THROW(ParticleEnsemble::with_positions(std::vector<double>(4097), 1.0, 0), validation_error);
}

TEST(PairInteraction, ShortcutMatchesDirect) {
  const CosineSeries V({0.1, -0.5, 0.2}, {0.3, 0.0});
  const CosineSeries W({0.0, -1.0, 0.4, 0.0, 0.1}, {0.2, 0.0, -0.3, 0.0});
  for (std::size_t N : {2u, 7u, 64u}) {
    const auto x = random_positions(N, N);
    PairInteraction fast(V, W, N, true), slow(V, W, N, false);
    ASSERT_TRUE(fast.uses_shortcut());
    ASSERT_FALSE(slow.uses_shortcut());
    std::vector<double> gf(N), gs(N);
    fast.gradient(x, gf);
    slow.gradient(x, gs);
    for (std::size_t i = 0; i < N; ++i) EXPECT_NEAR(gf[i], gs[i], 1e-10);
    EXPECT_NEAR(fast.energy(x), slow.energy(x), 1e-10);
    EXPECT_NEAR(slow.energy(x), direct_energy(V, W, x), 1e-10);
  }
}

TEST(PairInteraction, GradientIsDerivativeOfEnergy) {
  const CosineSeries V({0.0, -0.5}), W({0.0, -1.0, 0.3});
  const std::size_t N = 5;
  auto x = random_positions(N, 1);
  PairInteraction p(V, W, N);
  std::vector<double> g(N);
  p.gradient(x, g);
  for (std::size_t i = 0; i < N; ++i) {
    auto xp = x, xm = x;
    xp[i] += 1e-6;
    xm[i] -= 1e-6;
    EXPECT_NEAR(g[i], (p.energy(xp) - p.energy(xm)) / 2e-6, 1e-6);
  }
}

TEST(Sde, FreeDiffusionMsd) {
  const double beta = 2.0;
  const auto m = frozen_field_msd(DensityField::uniform(), CosineSeries{}, CosineSeries{}, beta, 10000, 0.01, 2.0, 20, 3);
  const auto fit = msd_diffusivity(m);
  EXPECT_NEAR(fit.A_hat, 1.0 / beta, 3.0 * fit.standard_error);
  EXPECT_TRUE(fit.diffusive);
  // MSD / 2t at the end.
  const std::size_t F = m.times.size();
  std::vector<double> last(m.paths);
  for (std::size_t p = 0; p < m.paths; ++p) last[p] = m.squared_displacement[p * F + F - 1] / (2.0 * m.times.back());
  EXPECT_NEAR(stats::mean(last), 1.0 / beta, 3.0 * std::sqrt(stats::variance(last) / m.paths));
}

TEST(Sde, ZeroNoiseIsGradientDescent) {
  auto e = ParticleEnsemble::with_positions({0.1, 0.45}, 1e14, 2);
  const auto tr = simulate_sde(e, CosineSeries{}, kuramoto, SdeOptions{1e-3, 1.0, 10});
  PairInteraction p(CosineSeries{}, kuramoto, 2);
  double prev = 1e300;
  for (std::size_t f = 0; f < tr.frames(); ++f) {
    const double h = p.energy(tr.frame(f));
    EXPECT_LE(h, prev + 1e-12);
    prev = h;
  }
  // The two particles synchronise: H -> (1/4) (W(0) + W(0)) = -1/2.
  EXPECT_NEAR(prev, -0.5, 1e-6);
}

TEST(Sde, FrozenSinglePathMatchesMsdPath) {
  const double beta = 4.0;
  const auto nu = DensityField::von_mises(amplitude_roots(beta, 0.0).a_min);
  const auto U = mean_field_potential(nu, CosineSeries{}, kuramoto);
  const QuantileTable start(DensityField::gibbs(U, beta, nu.grid_size()));
  const auto m = frozen_field_msd(nu, CosineSeries{}, kuramoto, beta, 3, 1e-3, 0.5, 50, 77);
  for (std::size_t p = 0; p < 3; ++p) {
    auto e = ParticleEnsemble::sample(start, 1, beta, 77, p);
    const double x0 = e.positions[0];
    const auto tr = simulate_sde(e, CosineSeries{}, kuramoto, SdeOptions{1e-3, 0.5, 50}, &nu);
    ASSERT_EQ(tr.frames(), m.times.size());
    for (std::size_t f = 0; f < tr.frames(); ++f) {
      const double d = tr.frame(f)[0] - x0;
      EXPECT_EQ(d * d, m.squared_displacement[p * m.times.size() + f]);
    }
  }
}

TEST(Sde, BitReproducibleAcrossRunsAndThreads) {
  const auto nu = DensityField::von_mises(1.0);
  auto run = [&] {
    auto e = ParticleEnsemble::sample(nu, 16, 2.0, 9);
    return simulate_sde(e, CosineSeries::cosine(-0.3), kuramoto, SdeOptions{1e-3, 0.2, 20}).positions;
  };
  EXPECT_EQ(run(), run());
  GibbsOptions o;
  o.n_samples = 200;
  o.thinning = 2;
  o.burn_in = 200;
  o.chains = 4;
  o.seed = 4;
  std::vector<double> one, many, m1, m4;
  {
    ThreadsEnv t("1");
    one = gibbs_sample(8, CosineSeries{}, kuramoto, 1.0, o).samples;
    m1 = frozen_field_msd(nu, CosineSeries{}, kuramoto, 1.0, 40, 1e-3, 0.1, 10, 3).squared_displacement;
  }
  {
    ThreadsEnv t("4");
    many = gibbs_sample(8, CosineSeries{}, kuramoto, 1.0, o).samples;
    m4 = frozen_field_msd(nu, CosineSeries{}, kuramoto, 1.0, 40, 1e-3, 0.1, 10, 3).squared_displacement;
  }
  EXPECT_EQ(one, many);
  EXPECT_EQ(m1, m4);
}

TEST(Sde, RejectsLargeStep) {
  auto e = ParticleEnsemble::with_positions({0.1, 0.2}, 1.0, 0);
  EXPECT_THROW(simulate_sde(e, CosineSeries{}, kuramoto, SdeOptions{0.01, 1.0, 1}), validation_error);
  SdeOptions bad;
  bad.record_stride = 0;
  EXPECT_THROW(simulate_sde(e, CosineSeries{}, kuramoto, bad), validation_error);
}

TEST(Mala, LogRatioIsAntisymmetric) {
  GibbsTarget t(CosineSeries::cosine(-0.5), CosineSeries({0.0, -1.0, 0.2}, {0.1}), 6, 1.5);
  const auto x = random_positions(6, 11), y = random_positions(6, 12);
  for (double h : {1e-3, 0.05, 0.4}) EXPECT_NEAR(mala_log_ratio(t, x, y, h), -mala_log_ratio(t, y, x, h), 1e-9);
  // With h -> 0 proposals the ratio reduces to the Hamiltonian difference plus the kernel term.
  PairInteraction p(CosineSeries::cosine(-0.5), CosineSeries({0.0, -1.0, 0.2}), 6);
  EXPECT_NEAR(t.log_density(y) - t.log_density(x), -1.5 * (p.energy(y) - p.energy(x)), 1e-10);
}

TEST(Mala, TwoParticleMarginalIsUniform) {
  GibbsOptions o;
  o.n_samples = 8000;
  o.thinning = 5;
  o.burn_in = 2000;
  o.chains = 4;
  o.seed = 31;
  const auto g = gibbs_sample(2, CosineSeries{}, kuramoto, 1.0, o);
  const auto c = bin_counts(g, 0, 32);
  const std::vector<double> e(32, g.count() / 32.0);
  EXPECT_GT(stats::chi_squared_p_value(c, e), 0.01);
}

TEST(Mala, OneParticleMatchesBoltzmann) {
  const auto V = CosineSeries::cosine(-0.5);
  const double beta = 2.0;
  GibbsOptions o;
  o.n_samples = 20000;
  o.thinning = 5;
  o.burn_in = 2000;
  o.chains = 2;
  o.seed = 32;
  const auto g = gibbs_sample(1, V, CosineSeries{}, beta, o);
  const std::size_t bins = 32;
  const auto c = bin_counts(g, 0, bins);
  // Cell masses of exp(-beta V) / I0(1) by fine midpoint quadrature.
  std::vector<double> e(bins, 0.0);
  const double z = boost::math::cyl_bessel_i(0, 1.0);
  const int sub = 200;
  for (std::size_t b = 0; b < bins; ++b) {
    for (int i = 0; i < sub; ++i) {
      const double x = (b + (i + 0.5) / sub) / bins;
      e[b] += std::exp(std::cos(2 * pi * x)) / z / (bins * sub);
    }
    e[b] *= static_cast<double>(g.count());
  }
  EXPECT_GT(stats::chi_squared_p_value(c, e), 0.01);
}

TEST(Mala, MeanHamiltonianMatchesQuadrature) {
  const auto V = CosineSeries::cosine(-0.4), W = CosineSeries({0.0, -1.0, 0.3});
  const double beta = 1.5;
  GibbsOptions o;
  o.n_samples = 20000;
  o.thinning = 4;
  o.burn_in = 2000;
  o.chains = 2;
  o.seed = 33;
  const auto g = gibbs_sample(2, V, W, beta, o);
  PairInteraction p(V, W, 2);
  std::vector<double> h(g.count());
  for (std::size_t s = 0; s < g.count(); ++s) h[s] = p.energy(g.sample(s));
  const auto bm = stats::batch_means(h);
  // <H> = -d log Z / d beta on a 2D trapezoid grid.
  const int n = 128;
  double z = 0.0, zh = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const std::vector<double> x{static_cast<double>(i) / n, static_cast<double>(j) / n};
      const double e = direct_energy(V, W, x);
      z += std::exp(-beta * e);
      zh += e * std::exp(-beta * e);
    }
  EXPECT_NEAR(bm.mean, zh / z, 3.0 * bm.standard_error);
}

TEST(Mala, SamplesAreExchangeable) {
  GibbsOptions o;
  o.n_samples = 5000;
  o.thinning = 5;
  o.burn_in = 2000;
  o.seed = 34;
  const auto g = gibbs_sample(3, CosineSeries::cosine(-0.5), kuramoto, 2.0, o);
  std::vector<double> a, b;
  for (std::size_t s = 0; s < g.count(); ++s) {
    const auto x = g.sample(s);
    a.push_back(wrap_unit(x[0] - 0.5 * x[1]));
    b.push_back(wrap_unit(x[1] - 0.5 * x[0]));
  }
  EXPECT_GT(stats::ks_two_sample_p_value(a, b), 0.01);
}

TEST(Mala, RejectsBadOptions) {
  GibbsOptions o;
  o.thinning = 0;
  EXPECT_THROW(gibbs_sample(2, CosineSeries{}, kuramoto, 1.0, o), validation_error);
  EXPECT_THROW(gibbs_sample(0, CosineSeries{}, kuramoto, 1.0, GibbsOptions{}), validation_error);
}

TEST(Fluctuations, BasisAndTrivialModes) {
  EXPECT_NEAR(fourier_basis(1, 0.25), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(fourier_basis(-1, 0.0), std::sqrt(2.0), 1e-15);
  EXPECT_EQ(fourier_basis(0, 0.3), 1.0);
  const double a = 1.3;
  const auto nu = DensityField::von_mises(a);
  EXPECT_NEAR(basis_expectation(-1, nu), std::sqrt(2.0) * r0(a), 1e-13);
  EXPECT_NEAR(basis_expectation(1, nu), 0.0, 1e-15);

  GibbsOptions o;
  o.n_samples = 500;
  o.thinning = 2;
  o.burn_in = 500;
  o.seed = 35;
  const auto g = gibbs_sample(32, CosineSeries{}, kuramoto, 1.0, o);
  const std::vector<int> k0{0};
  const auto modes = fluctuation_modes(g, k0, DensityField::uniform());
  for (double v : modes[0].projections) EXPECT_NEAR(v, 0.0, 1e-13);
  EXPECT_EQ(interaction_fluctuation_energy(g, CosineSeries{}, DensityField::uniform()).value, 0.0);
}

TEST(Fluctuations, HigherModeVarianceAndEnergyAtLowBeta) {
  GibbsOptions o;
  o.n_samples = 20000;
  o.thinning = 6;
  o.burn_in = 5000;
  o.seed = 36;
  const double beta = 0.5;
  const auto g = gibbs_sample(128, CosineSeries{}, kuramoto, beta, o);
  const std::vector<int> ks{3, -3};
  for (const auto& m : fluctuation_modes(g, ks, DensityField::uniform())) EXPECT_NEAR(m.variance, 1.0, 0.15);
  const auto e = interaction_fluctuation_energy(g, kuramoto, DensityField::uniform());
  EXPECT_NEAR(e.value, -2.0 / (2.0 - beta), 0.15 * 2.0 / (2.0 - beta));
}

TEST(OrderParameter, ConcentratesNearMeanField) {
  const double beta = 4.0;
  GibbsOptions o;
  o.n_samples = 2000;
  o.thinning = 5;
  o.burn_in = 5000;
  o.seed = 37;
  const auto g = gibbs_sample(256, CosineSeries{}, kuramoto, beta, o);
  std::vector<double> r(g.count());
  for (std::size_t s = 0; s < g.count(); ++s) r[s] = std::abs(order_parameter(g.sample(s)));
  const double expect = r0(amplitude_roots(beta, 0.0).a_min);
  EXPECT_NEAR(stats::mean(r), expect, 0.1 * expect);
  EXPECT_NEAR(std::abs(order_parameter(std::vector<double>{0.2, 0.2, 1.2})), 1.0, 1e-15);
}

TEST(Msd, InteractingTaggedParticleWithinSandwich) {
  // Uniform stationary state at beta = 1: Z Z^- = 1, so the sandwich pins A to 1.
  const double beta = 1.0;
  std::vector<Trajectory> trs;
  for (std::uint64_t r = 0; r < 400; ++r) {
    auto e = ParticleEnsemble::sample(DensityField::uniform(), 8, beta, 40, r);
    trs.push_back(simulate_sde(e, CosineSeries{}, kuramoto, SdeOptions{2e-3, 20.0, 250}));
  }
  const auto fit = msd_diffusivity(msd_paths(trs, 0));
  const auto eff = corrector_1d(DensityField::uniform(), beta, CosineSeries{}).second;
  EXPECT_GE(fit.A_hat + 3.0 * fit.standard_error, eff.lower_bound);
  EXPECT_LE(fit.A_hat - 3.0 * fit.standard_error, eff.upper_bound);
}

TEST(Msd, FitRecoversLinearGrowth) {
  MsdPaths m;
  m.paths = 2;
  for (int f = 0; f <= 10; ++f) m.times.push_back(f);
  for (int p = 0; p < 2; ++p)
    for (int f = 0; f <= 10; ++f) m.squared_displacement.push_back(2.0 * (p ? 0.3 : 0.5) * f);
  const auto fit = msd_diffusivity(m);
  EXPECT_NEAR(fit.A_hat, 0.4, 1e-14);
  EXPECT_NEAR(fit.fit_r2, 1.0, 1e-12);
  MsdPaths short_m;
  short_m.paths = 1;
  short_m.times = {0.0, 1.0};
  short_m.squared_displacement = {0.0, 1.0};
  EXPECT_THROW(msd_diffusivity(short_m), validation_error);
}

TEST(Partition, SmallNOracles) {
  EXPECT_NEAR(partition_function_small_n(1, CosineSeries{}, kuramoto, 1.0), 1.0, 1e-15);
  EXPECT_NEAR(partition_function_small_n(1, CosineSeries::cosine(-0.5), CosineSeries{}, 2.0),
              boost::math::cyl_bessel_i(0, 1.0), 1e-13);
  for (double beta : {0.5, 1.0, 3.0})
    EXPECT_NEAR(partition_function_small_n(2, CosineSeries{}, kuramoto, beta), boost::math::cyl_bessel_i(0, beta / 2),
                1e-8);
  // N = 3 against a direct triple sum on a coarser grid (both spectrally accurate).
  const int n = 48;
  double z = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const std::vector<double> x{double(i) / n, double(j) / n, double(k) / n};
        z += std::exp(-direct_energy(CosineSeries{}, kuramoto, x));
      }
  EXPECT_NEAR(partition_function_small_n(3, CosineSeries{}, kuramoto, 1.0), z / (n * n * n), 1e-10);
  EXPECT_THROW(partition_function_small_n(4, CosineSeries{}, kuramoto, 1.0), validation_error);
}
