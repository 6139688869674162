#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "mvlab/coupling.hpp"
#include "mvlab/errors.hpp"
#include "mvlab/rng.hpp"
#include "mvlab/stats.hpp"

using namespace mvlab;

namespace {

const double pi = std::numbers::pi;

// lhs of the threshold condition, written out independently.
double threshold_lhs(double beta, double k) {
  const double s = beta * k / 32.0;
  return k / (4.0 * std::exp(s) * (std::exp(s) - 1.0));
}

}  // namespace

TEST(Quadrature, AdaptiveSimpson) {
  EXPECT_NEAR(adaptive_simpson([](double x) { return x * x * x; }, 0.0, 2.0), 4.0, 1e-14);
  EXPECT_NEAR(adaptive_simpson([](double x) { return std::exp(-x * x); }, 0.0, 3.0), 0.5 * std::sqrt(pi) * std::erf(3.0),
              1e-12);
  EXPECT_EQ(adaptive_simpson([](double) { return 1.0; }, 1.0, 1.0), 0.0);
}

TEST(Profile, FlatClosedForms) {
  const DistanceProfile p(0.0, 0.7, 1025);
  EXPECT_NEAR(p.c(), 8.0, 1e-12);
  const auto r = p.r_nodes();
  for (std::size_t i = 0; i < r.size(); i += 64) {
    EXPECT_NEAR(p.g_nodes()[i], 1.0 - 2.0 * r[i] * r[i], 1e-12);
    EXPECT_NEAR(p.f_nodes()[i], r[i] - 2.0 / 3.0 * r[i] * r[i] * r[i], 1e-12);
    EXPECT_NEAR(p.Phi_nodes()[i], r[i], 1e-14);
  }
  EXPECT_NEAR(p.g_nodes().back(), 0.5, 1e-12);
  EXPECT_NEAR(p.f(0.3217), 0.3217 - 2.0 / 3.0 * std::pow(0.3217, 3), 1e-10);
  EXPECT_NEAR(predicted_rate(p), 16.0 / 0.7, 1e-10);
}

TEST(Profile, PhiMatchesErf) {
  const double kappa = -40.0, beta = 0.5;
  const DistanceProfile p(kappa, beta, 513);
  const double alpha = beta * std::abs(kappa) / 8.0;
  const auto r = p.r_nodes();
  for (std::size_t i = 0; i < r.size(); i += 32)
    EXPECT_NEAR(p.Phi_nodes()[i], 0.5 * std::sqrt(pi / alpha) * std::erf(std::sqrt(alpha) * r[i]), 1e-13);
}

TEST(Profile, ShapeAndContractionInequality) {
  for (double kappa : {0.0, -5.0, -60.0}) {
    for (double beta : {0.2, 1.0, 2.0}) {
      const DistanceProfile p(kappa, beta, 2049);
      const auto r = p.r_nodes(), f = p.f_nodes(), fp = p.f_prime_nodes();
      const double lower = p.psi(0.5) / 2.0;
      for (std::size_t i = 0; i < r.size(); ++i) {
        ASSERT_LE(lower * r[i], f[i] + 1e-15);
        ASSERT_LE(f[i], r[i] + 1e-15);
        ASSERT_GT(fp[i], 0.0);
        // f'' - (beta kappa r / 4) f' = -(c/2) Phi <= -(c/2) f.
        EXPECT_LE(p.f_second_node(i) - beta * kappa * r[i] / 4.0 * fp[i], -0.5 * p.c() * f[i] + 1e-12);
        if (i > 0) ASSERT_LE(p.f_second_node(i), 1e-12);
      }
      EXPECT_GE(p.c(), contraction_constant_lower_bound(kappa, beta) * (1 - 1e-12));
    }
  }
}

TEST(Profile, DistanceIsAMetric) {
  const DistanceProfile p(-20.0, 0.5);
  Stream s(8, 0);
  for (int t = 0; t < 500; ++t) {
    const double x = s.uniform(), y = s.uniform(), z = s.uniform();
    EXPECT_NEAR(p.distance(x, y), p.distance(y, x), 1e-15);
    EXPECT_LE(p.distance(x, z), p.distance(x, y) + p.distance(y, z) + 1e-12);
  }
  EXPECT_EQ(p.distance(0.3, 0.3), 0.0);
  EXPECT_NEAR(p.distance(0.05, 0.95), p.f(0.1), 1e-15);
}

TEST(Profile, RejectsBadInput) {
  EXPECT_THROW(DistanceProfile(1.0, 1.0), validation_error);
  EXPECT_THROW(DistanceProfile(0.0, 0.0), validation_error);
}

TEST(Threshold, BoundaryAndMonotonicity) {
  const auto V = CosineSeries::cosine(-0.5);
  const double M = 4 * pi * pi;
  const double b0 = high_temperature_threshold(V, CosineSeries::cosine(-1.0));
  const double k = std::abs(semiconvexity_kappa(V, CosineSeries::cosine(-1.0)));
  EXPECT_GE(threshold_lhs(b0 * (1 - 1e-6), k), M);
  EXPECT_LT(threshold_lhs(b0 * (1 + 1e-6), k), M);
  double prev = std::numeric_limits<double>::infinity();
  for (double J : {0.25, 0.5, 1.0, 2.0}) {
    const double b = high_temperature_threshold(J * V, CosineSeries::cosine(-J));
    EXPECT_LT(b, prev);
    prev = b;
  }
  EXPECT_TRUE(std::isinf(high_temperature_threshold(V, CosineSeries{})));
}

TEST(Reflection, Weight) {
  EXPECT_EQ(reflection_weight(0.0, 1e-3), 0.0);
  EXPECT_EQ(reflection_weight(5e-4, 1e-3), 0.0);
  EXPECT_EQ(reflection_weight(1e-3, 1e-3), 1.0);
  EXPECT_NEAR(reflection_weight(7.5e-4, 1e-3), 0.5, 1e-15);
  double prev = 0.0;
  for (double g = 5e-4; g <= 1e-3; g += 1e-5) {
    EXPECT_GE(reflection_weight(g, 1e-3), prev);
    prev = reflection_weight(g, 1e-3);
  }
}

namespace {

struct Fixture {
  double beta = 0.3, eta = 0.5;
  CosineSeries V = CosineSeries::cosine(-0.5), W = CosineSeries::cosine(-1.0);
  StationaryState target = amplitude_state(amplitude_roots(0.3, 0.5).a_min, 0.3, 0.5, V, W);
  DistanceProfile profile{semiconvexity_kappa(V, W), 0.3};
};

}  // namespace

TEST(Coupling, IdenticalStartStaysCoupled) {
  Fixture s;
  CouplingOptions o;
  o.mode = CouplingMode::frozen;
  o.identical_start = true;
  o.replicas = 50;
  o.dt = 1e-4;
  o.t_final = 0.05;
  const auto tr = simulate_coupling(s.V, s.W, s.target, s.target.density, s.beta, s.profile, o);
  EXPECT_EQ(tr.max_gamma, 0.0);
  for (double m : tr.mean_f_gamma) EXPECT_EQ(m, 0.0);
  EXPECT_EQ(tr.final_x, tr.final_y);
}

TEST(Coupling, MarginalsArePreserved) {
  Fixture s;
  CouplingOptions o;
  o.mode = CouplingMode::frozen;
  o.replicas = 2000;
  o.dt = 1e-4;
  o.t_final = 0.1;
  o.seed = 5;
  const auto tr = simulate_coupling(s.V, s.W, s.target, DensityField::uniform(), s.beta, s.profile, o);
  const QuantileTable q(s.target.density);
  const auto cdf = [&](double v) { return q.cdf_at(v); };
  EXPECT_GT(stats::ks_one_sample_p_value(tr.final_x, cdf), 0.01);
  EXPECT_GT(stats::ks_one_sample_p_value(tr.final_y, cdf), 0.01);
}

TEST(Coupling, FrozenContractionAtLeastHalfPredicted) {
  Fixture s;
  CouplingOptions o;
  o.mode = CouplingMode::frozen;
  o.replicas = 400;
  o.dt = 1e-5;
  o.t_final = 0.04;
  o.record_stride = 100;
  o.seed = 6;
  const auto tr = simulate_coupling(s.V, s.W, s.target, DensityField::uniform(), s.beta, s.profile, o);
  const double rate = fit_decay_rate(tr, 10 * o.delta);
  EXPECT_GE(rate, 0.5 * predicted_rate(s.profile));
}

TEST(Coupling, MeanFieldModeDecreasesAndIsReproducible) {
  Fixture s;
  CouplingOptions o;
  o.replicas = 200;
  o.dt = 1e-5;
  o.t_final = 0.04;
  o.record_stride = 100;
  o.seed = 7;
  const auto a = simulate_coupling(s.V, s.W, s.target, DensityField::uniform(), s.beta, s.profile, o);
  const auto b = simulate_coupling(s.V, s.W, s.target, DensityField::uniform(), s.beta, s.profile, o);
  EXPECT_EQ(coupling_csv(a), coupling_csv(b));
  EXPECT_LT(a.mean_f_gamma.back(), 0.5 * a.mean_f_gamma.front());
}

TEST(Coupling, RejectsBadOptions) {
  Fixture s;
  CouplingOptions o;
  o.dt = 0.01;
  EXPECT_THROW(simulate_coupling(s.V, s.W, s.target, DensityField::uniform(), s.beta, s.profile, o), validation_error);
  o.dt = 1e-4;
  o.replicas = 0;
  EXPECT_THROW(simulate_coupling(s.V, s.W, s.target, DensityField::uniform(), s.beta, s.profile, o), validation_error);
}

TEST(Coupling, FitDecayRateSynthetic) {
  CouplingTrace tr;
  for (int i = 0; i < 20; ++i) {
    tr.times.push_back(0.1 * i);
    tr.mean_f_gamma.push_back(0.2 * std::exp(-3.0 * 0.1 * i));
  }
  EXPECT_NEAR(fit_decay_rate(tr, 1e-6), 3.0, 1e-12);
  EXPECT_TRUE(std::isnan(fit_decay_rate(tr, 1.0)));
}
