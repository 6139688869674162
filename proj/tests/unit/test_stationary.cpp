#include <cmath>
#include <numbers>

#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/tools/roots.hpp>
#include <gtest/gtest.h>

#include "mvlab/errors.hpp"
#include "mvlab/stationary.hpp"

using namespace mvlab;

namespace {

const double pi2 = 2.0 * std::numbers::pi;

double ratio(double a) {
  const double x = std::abs(a);
  if (x == 0.0) return 0.0;
  return std::copysign(boost::math::cyl_bessel_i(1, x) / boost::math::cyl_bessel_i(0, x), a);
}

double ratio_prime(double a) {
  const double r = ratio(a);
  return a == 0.0 ? 0.5 : 1.0 - r / a - r * r;
}

double root_between(const std::function<double(double)>& f, double lo, double hi) {
  std::uintmax_t it = 200;
  const auto r = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(52), it);
  return 0.5 * (r.first + r.second);
}

// Closed-form free energy of exp(a cos) / I_0(a) for V = -eta cos, W = -cos.
double family_energy(double a, double beta, double eta) {
  const double r = ratio(a);
  return (a * r - std::log(boost::math::cyl_bessel_i(0, std::abs(a)))) / beta - eta * r - 0.5 * r * r;
}

// Tangency of a = beta (eta + r0(a)) on a < 0: a r0'(a) = eta + r0(a).
double oracle_critical_beta(double eta) {
  const double a = root_between([&](double x) { return x * ratio_prime(x) - eta - ratio(x); }, -200.0, -1e-6);
  return 1.0 / ratio_prime(a);
}

}  // namespace

TEST(Amplitude, CriticalBetaUnbiased) {
  EXPECT_EQ(critical_beta(0.0), 2.0);
  EXPECT_EQ(amplitude_roots(1.999, 0.0).a_min, 0.0);
  EXPECT_EQ(amplitude_roots(2.0, 0.0).a_min, 0.0);
  EXPECT_GT(amplitude_roots(2.001, 0.0).a_min, 0.0);
}

TEST(Amplitude, PositiveRootMatchesOracle) {
  for (double eta : {0.0, 0.2, 0.5, 0.9}) {
    for (double beta : {0.5, 2.5, 4.0, 12.0, 40.0}) {
      const auto r = amplitude_roots(beta, eta);
      if (eta == 0.0 && beta <= 2.0) continue;
      const double o = root_between([&](double a) { return beta * (eta + ratio(a)) - a; }, 1e-9, beta * (1 + eta) + 1);
      EXPECT_NEAR(r.a_min, o, 1e-10 * std::max(1.0, o)) << eta << " " << beta;
    }
  }
}

TEST(Amplitude, RootsSatisfyEquationAndBounds) {
  for (double eta : {0.0, 0.3, 0.5}) {
    for (double beta : {1.0, 3.0, 10.0, 25.0}) {
      const auto r = amplitude_roots(beta, eta);
      EXPECT_TRUE(std::is_sorted(r.roots.begin(), r.roots.end()));
      for (double a : r.roots) {
        EXPECT_NEAR(beta * (eta + r0(a)), a, 1e-9 * std::max(1.0, std::abs(a)));
        EXPECT_GT(a, beta * (eta - 1.0));
        EXPECT_LT(a, beta * (eta + 1.0));
      }
    }
  }
}

TEST(Amplitude, CriticalBetaTiltedMatchesTangencyOracle) {
  for (double eta : {0.1, 0.5, 0.8}) {
    const double bc = critical_beta(eta);
    EXPECT_NEAR(bc, oracle_critical_beta(eta), 1e-7 * bc) << eta;
    EXPECT_FALSE(amplitude_roots(bc * (1 - 1e-6), eta).a_star.has_value());
    EXPECT_TRUE(amplitude_roots(bc * (1 + 1e-6), eta).a_star.has_value());
  }
  EXPECT_NEAR(critical_beta(0.5), 9.4325, 1e-4);
}

TEST(Amplitude, CriticalBetaIncreasesWithTilt) {
  double prev = 2.0;
  for (double eta = 0.05; eta < 0.95; eta += 0.1) {
    const double bc = critical_beta(eta);
    EXPECT_GT(bc, prev);
    prev = bc;
  }
}

TEST(Amplitude, RejectsBadParameters) {
  EXPECT_THROW(amplitude_roots(0.0, 0.0), validation_error);
  EXPECT_THROW(amplitude_roots(1.0, 1.0), validation_error);
  EXPECT_THROW(critical_beta(-0.1), validation_error);
}

TEST(FreeEnergy, FamilyClosedForm) {
  for (double a : {-3.0, 0.0, 0.5, 4.0}) {
    for (double eta : {0.0, 0.5}) {
      const double beta = 3.0;
      const auto nu = DensityField::von_mises(a, 256);
      EXPECT_NEAR(free_energy(nu, CosineSeries::cosine(-eta), CosineSeries::cosine(-1.0), beta),
                  family_energy(a, beta, eta), 1e-12);
    }
  }
}

TEST(FreeEnergy, MinimiserBranchHasLowestEnergy) {
  for (double beta : {10.0, 14.0}) {
    const auto r = amplitude_roots(beta, 0.5);
    ASSERT_TRUE(r.a_star);
    for (double a : r.roots)
      if (a != r.a_min) EXPECT_LT(family_energy(r.a_min, beta, 0.5), family_energy(a, beta, 0.5));
  }
}

TEST(Dissipation, VanishesAtSteadyStatesAndMatchesClosedForm) {
  const auto V = CosineSeries::cosine(-0.5), W = CosineSeries::cosine(-1.0);
  for (double beta : {3.0, 10.0})
    for (double a : amplitude_roots(beta, 0.5).roots)
      if (std::abs(a) < 5.0) EXPECT_NEAR(dissipation(DensityField::von_mises(a, 1024), V, W, beta), 0.0, 1e-12);
  const double beta = 12.0;
  // Off the family's fixed points D = (2 pi F(b))^2 E[sin^2] with E[sin^2] = I_1 / (b I_0).
  const double b = 1.3;
  const double F = beta * (0.5 + ratio(b)) - b;
  EXPECT_NEAR(dissipation(DensityField::von_mises(b, 256), V, W, beta), pi2 * pi2 * F * F * ratio(b) / b, 1e-9);
}

TEST(Solve, ConvergesToFamilyMember) {
  const auto V = CosineSeries::cosine(-0.5), W = CosineSeries::cosine(-1.0);
  const auto s = solve_stationary(V, W, 3.0, DensityField::uniform());
  ASSERT_TRUE(s.amplitude_a);
  EXPECT_NEAR(*s.amplitude_a, amplitude_roots(3.0, 0.5).a_min, 1e-8);
  EXPECT_EQ(s.kind, StateKind::minimiser);
  EXPECT_LT(consistency_residual(s.density, V, W, 3.0), 1e-10);
}

TEST(Solve, HighTemperatureGivesUniform) {
  const auto s = solve_stationary(CosineSeries{}, CosineSeries::cosine(-1.0), 1.0, DensityField::von_mises(1.0));
  EXPECT_EQ(s.kind, StateKind::uniform);
  EXPECT_NEAR(s.density.max_value(), 1.0, 1e-9);
}

TEST(Solve, OffFamilyPotential) {
  // Repulsive two-mode W with a confining V: still a fixed point of T.
  const CosineSeries V({0.0, -0.8}), W({0.0, 0.4, -0.3});
  const auto s = solve_stationary(V, W, 2.0, DensityField::uniform());
  EXPECT_LT(consistency_residual(s.density, V, W, 2.0), 1e-10);
  EXPECT_FALSE(s.amplitude_a.has_value());
}

TEST(Solve, ReportsNonConvergence) {
  SolveOptions o;
  o.max_iter = 2;
  EXPECT_THROW(solve_stationary(CosineSeries::cosine(-0.5), CosineSeries::cosine(-1.0), 3.0, DensityField::uniform(), o),
               numerical_error);
}

TEST(Family, Detection) {
  const auto f = detect_cosine_family(CosineSeries::cosine(-1.0), CosineSeries::cosine(-2.0));
  ASSERT_TRUE(f);
  EXPECT_DOUBLE_EQ(f->coupling, 2.0);
  EXPECT_DOUBLE_EQ(f->eta, 0.5);
  EXPECT_FALSE(detect_cosine_family(CosineSeries{}, CosineSeries::cosine(1.0)));
  EXPECT_FALSE(detect_cosine_family(CosineSeries::cosine(-1.0), CosineSeries::cosine(-0.5)));
}

TEST(Bifurcation, ScanColumns) {
  const std::vector<double> betas{1.0, 2.0, 2.5, 4.0};
  const auto rows = bifurcation_scan(betas, 0.0, 256);
  EXPECT_EQ(rows[0].a_min, 0.0);
  EXPECT_EQ(rows[1].a_min, 0.0);
  EXPECT_GT(rows[2].a_min, 0.0);
  EXPECT_GT(rows[3].energy_gap, 0.0);
  for (const auto& r : rows) EXPECT_TRUE(r.min_branch_is_minimiser);
  const std::vector<double> bad{2.0, 1.0};
  EXPECT_THROW(bifurcation_scan(bad, 0.0), validation_error);
}
