#pragma once

// Acceptance checks with pinned tolerances, shared by the acceptance test
// binary and `mvlab check`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mvlab/coupling.hpp"
#include "mvlab/homogenize.hpp"
#include "mvlab/particles.hpp"
#include "mvlab/pde.hpp"
#include "mvlab/special.hpp"
#include "mvlab/stationary.hpp"
#include "mvlab/stats.hpp"

namespace mvlab::verify {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  std::string detail;
};

namespace tol {
inline constexpr double amplitude = 1e-10;
inline constexpr double diffusivity = 1e-10;
inline constexpr double sandwich = 1e-12;
inline constexpr double amplitude_asymmetry = 0.01;
inline constexpr double diffusivity_gap = 0.01;
inline constexpr double fluctuation = 0.15;
inline constexpr double min_effective_samples = 1e4;
inline constexpr double msd = 0.05;
inline constexpr double msd_r2 = 0.99;
inline constexpr double energy_dissipation = 0.05;
inline constexpr double stationary_drift = 1e-6;
inline constexpr double stationary_dissipation = 1e-9;
inline constexpr double l1_to_uniform = 1e-6;
inline constexpr double contraction_slack = 1e-8;
inline constexpr double partition_quadrature = 1e-8;
inline constexpr double mass_per_step = 1e-14;
inline constexpr double triangle = 1e-9;
inline constexpr double chi2_level = 0.01;
}  // namespace tol

namespace detail {

class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      passed_ = false;
      if (!failures_.empty()) failures_ += "; ";
      failures_ += what;
    }
  }
  void note(const std::string& s) {
    if (!notes_.empty()) notes_ += ", ";
    notes_ += s;
  }
  bool passed() const { return passed_; }
  std::string detail() const { return passed_ ? notes_ : failures_ + (notes_.empty() ? "" : " | " + notes_); }

 private:
  bool passed_ = true;
  std::string failures_, notes_;
};

inline std::string num(double v, int digits = 6) {
  std::ostringstream o;
  o.precision(digits);
  o << v;
  return o.str();
}

// Positive amplitude root by plain bisection with r0 from quadrature Bessel
// values.
inline double oracle_amplitude(double beta) {
  auto F = [&](double a) { return beta * bessel_I_quadrature(1, a) / bessel_I_quadrature(0, a) - a; };
  double lo = 1e-6, hi = beta + 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (F(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

inline CriterionResult critical_temperature() {
  detail::Checks c;
  for (double beta : {1.0, 1.9}) {
    const auto r = amplitude_roots(beta, 0.0);
    c.expect(r.a_min == 0.0 && r.roots.size() == 1 && r.roots[0] == 0.0,
             "beta=" + detail::num(beta) + " returned a nonzero amplitude");
  }
  for (double beta : {2.1, 4.0}) {
    const double a = amplitude_roots(beta, 0.0).a_min;
    const double o = detail::oracle_amplitude(beta);
    c.expect(a > 0.0 && std::abs(a - o) <= tol::amplitude,
             "beta=" + detail::num(beta) + " a_min=" + detail::num(a, 15) + " oracle=" + detail::num(o, 15));
    c.note("a_min(" + detail::num(beta) + ")=" + detail::num(a, 12));
  }
  return {1, "critical temperature beta_c = 2", c.passed(), 0.0, c.detail()};
}

inline CriterionResult effective_diffusivity() {
  detail::Checks c;
  const auto W = CosineSeries::cosine(-1.0);
  double worst = 0.0;
  for (double a : {0.25, 1.0, 3.0, 6.0}) {
    for (double beta : {0.5, 2.0, 4.0}) {
      const auto nu = DensityField::von_mises(a, 512);
      const double expected = (1.0 / beta) / std::pow(bessel_I(0, a), 2);
      const auto [prof, eff] = corrector_1d(nu, beta);
      const auto with_u = corrector_1d(nu, beta, CosineSeries::cosine(-a / beta)).second;
      const auto analytic = effective_diffusion_from_amplitude(a, beta);
      const double err = std::abs(eff.value - expected) / expected;
      worst = std::max(worst, err);
      c.expect(err <= tol::diffusivity, "a=" + detail::num(a) + " beta=" + detail::num(beta) +
                                            " relative error " + detail::num(err));
      for (const auto* e : {&eff, &with_u, &analytic})
        c.expect(e->within_bounds(tol::sandwich), "sandwich violated at a=" + detail::num(a));
    }
  }
  c.note("max relative error " + detail::num(worst, 3));
  return {2, "effective diffusivity and ellipticity bounds", c.passed(), 0.0, c.detail()};
}

inline CriterionResult non_commutativity() {
  detail::Checks c;
  const double eta = 0.5;
  const double beta = critical_beta(eta) + 1.0;
  const auto r = non_commutativity_report(eta, beta);
  c.expect(r.a_min > 0.0, "a_min not positive");
  c.expect(r.a_star && *r.a_star < 0.0, "a_star missing or nonnegative");
  if (r.a_star) {
    c.expect(std::abs(*r.a_star + r.a_min) > tol::amplitude_asymmetry, "a_star = -a_min");
    c.note("a_min=" + detail::num(r.a_min) + " a_star=" + detail::num(*r.a_star));
  }
  c.expect(r.relative_gap && *r.relative_gap > tol::diffusivity_gap, "diffusivity gap too small");
  if (r.relative_gap) c.note("gap=" + detail::num(*r.relative_gap));
  return {3, "non-commuting limits above beta_c", c.passed(), 0.0, c.detail()};
}

inline CriterionResult fluctuation_variances() {
  detail::Checks c;
  const auto W = CosineSeries::cosine(-1.0);
  const CosineSeries V;
  GibbsOptions o;
  o.n_samples = 60000;
  o.thinning = 6;
  o.burn_in = 5000;
  o.seed = 20240601;
  const auto g = gibbs_sample(256, V, W, 1.0, o);
  const std::vector<int> ks{1, -1, 2, -2};
  const auto modes = fluctuation_modes(g, ks, DensityField::uniform());
  for (const auto& m : modes) {
    const double expected = std::abs(m.mode_index) == 1 ? 2.0 : 1.0;
    c.expect(std::abs(m.variance - expected) <= tol::fluctuation * expected,
             "k=" + std::to_string(m.mode_index) + " variance " + detail::num(m.variance));
    c.expect(m.effective_samples >= tol::min_effective_samples,
             "k=" + std::to_string(m.mode_index) + " ess " + detail::num(m.effective_samples));
    c.note("var[" + std::to_string(m.mode_index) + "]=" + detail::num(m.variance, 4));
  }
  const auto e = interaction_fluctuation_energy(g, W, DensityField::uniform());
  c.expect(std::abs(e.value + 2.0) <= tol::fluctuation * 2.0, "interaction energy " + detail::num(e.value));
  c.note("E<W,GG>=" + detail::num(e.value, 4) + " acceptance=" + detail::num(g.acceptance, 3));
  return {4, "Gibbs fluctuation variances", c.passed(), 0.0, c.detail()};
}

inline CriterionResult msd_homogenization() {
  detail::Checks c;
  const double beta = 4.0;
  const double a = amplitude_roots(beta, 0.0).a_min;
  const auto nu = DensityField::von_mises(a);
  const auto m = frozen_field_msd(nu, CosineSeries{}, CosineSeries::cosine(-1.0), beta, 10000, 1e-3, 200.0, 1000, 4242);
  const auto fit = msd_diffusivity(m);
  const double A = effective_diffusion_from_amplitude(a, beta).value;
  const double rel = std::abs(fit.A_hat - A) / A;
  c.expect(rel <= tol::msd, "relative error " + detail::num(rel));
  c.expect(fit.fit_r2 >= tol::msd_r2, "R^2 " + detail::num(fit.fit_r2));
  c.note("A_hat=" + detail::num(fit.A_hat) + " A=" + detail::num(A) + " rel=" + detail::num(rel, 3) +
         " R^2=" + detail::num(fit.fit_r2, 4));
  return {5, "MSD effective diffusivity", c.passed(), 0.0, c.detail()};
}

inline CriterionResult pde_energy_structure() {
  detail::Checks c;
  const auto W = CosineSeries::cosine(-1.0);
  auto audit_run = [&](const std::string& label, const DensityField& nu0, const CosineSeries& V, double beta,
                       double dt, double T) {
    EvolveOptions o;
    o.dt = dt;
    o.t_final = T;
    o.record_stride = 1;
    const auto res = evolve_mv(nu0, V, W, beta, o);
    const auto a = convergence_audit(res.trace);
    c.expect(a.monotone, label + ": free energy increased");
    c.expect(a.energy_dissipation_error <= tol::energy_dissipation,
             label + ": dE/dt vs -D mismatch " + detail::num(a.energy_dissipation_error));
    c.note(label + " dE/D mismatch " + detail::num(a.energy_dissipation_error, 3));
    return res;
  };
  const auto perturbed = DensityField::from_function([](double x) { return 1.0 + 0.2 * std::cos(two_pi * x); });
  const auto r1 = audit_run("beta=1", perturbed, CosineSeries{}, 1.0, 2e-4, 1.0);
  const double l1 = l1_distance(r1.final_density, DensityField::uniform());
  c.expect(l1 < tol::l1_to_uniform, "L1 to uniform " + detail::num(l1));
  c.note("L1=" + detail::num(l1, 3));
  audit_run("beta=4", perturbed, CosineSeries{}, 4.0, 2e-4, 1.0);
  audit_run("beta=3 eta=0.5", DensityField::uniform(), CosineSeries::cosine(-0.5), 3.0, 2e-4, 1.0);

  struct Start {
    double beta, eta;
  };
  for (const auto s : {Start{1.0, 0.0}, Start{4.0, 0.0}, Start{3.0, 0.5}, Start{12.0, 0.5}}) {
    const auto roots = amplitude_roots(s.beta, s.eta);
    const auto V = CosineSeries::cosine(-s.eta);
    const auto nu0 = DensityField::von_mises(roots.a_min);
    EvolveOptions o;
    o.dt = std::min(2e-4, 0.5 * max_stable_dt(V, W, nu0.grid_size()));
    o.t_final = 10.0;
    o.record_stride = 1000;
    const auto res = evolve_mv(nu0, V, W, s.beta, o);
    const double drift = sup_distance(res.final_density, nu0);
    c.expect(drift <= tol::stationary_drift,
             "stationary start a=" + detail::num(roots.a_min) + " drifted " + detail::num(drift));
    if (roots.a_star) {
      const auto star = DensityField::von_mises(*roots.a_star);
      const double d = dissipation(star, V, W, s.beta);
      c.expect(d <= tol::stationary_dissipation, "dissipation at a_star " + detail::num(d));
    }
  }
  return {6, "PDE free-energy structure", c.passed(), 0.0, c.detail()};
}

inline CriterionResult coupling_contraction() {
  detail::Checks c;
  for (double kappa : {0.0, -10.0, -80.0}) {
    for (double beta : {0.1, 0.3, 1.0}) {
      const DistanceProfile p(kappa, beta);
      const auto r = p.r_nodes();
      const auto f = p.f_nodes();
      const auto fp = p.f_prime_nodes();
      const double lower = p.psi(0.5) / 2.0;
      bool bounds = true, increasing = true, concave = true, inequality = true;
      const double h = r[1] - r[0];
      for (std::size_t i = 0; i < r.size(); ++i) {
        bounds = bounds && lower * r[i] <= f[i] + 1e-15 && f[i] <= r[i] + 1e-15;
        if (i > 0) increasing = increasing && f[i] > f[i - 1];
        if (i > 0 && i + 1 < r.size()) {
          concave = concave && f[i + 1] - 2.0 * f[i] + f[i - 1] <= 1e-14;
          const double fpp = (fp[i + 1] - fp[i - 1]) / (2.0 * h);
          inequality = inequality && fpp - beta * r[i] * kappa * fp[i] / 4.0 <= -0.5 * p.c() * f[i] + tol::contraction_slack;
        }
      }
      const std::string at = " at kappa=" + detail::num(kappa) + " beta=" + detail::num(beta);
      c.expect(bounds, "bounds" + at);
      c.expect(increasing, "monotonicity" + at);
      c.expect(concave, "concavity" + at);
      c.expect(inequality, "contraction inequality" + at);
      c.expect(p.c() >= contraction_constant_lower_bound(kappa, beta) * (1.0 - 1e-12), "c lower bound" + at);
    }
  }
  const double beta = 0.3, eta = 0.5;
  const auto V = CosineSeries::cosine(-eta);
  const auto W = CosineSeries::cosine(-1.0);
  const DistanceProfile p(semiconvexity_kappa(V, W), beta);
  const auto target = amplitude_state(amplitude_roots(beta, eta).a_min, beta, eta, V, W);
  CouplingOptions o;
  o.mode = CouplingMode::frozen;
  o.dt = 1e-5;
  o.t_final = 0.05;
  o.replicas = 1000;
  o.record_stride = 50;
  o.seed = 777;
  const auto tr = simulate_coupling(V, W, target, DensityField::uniform(), beta, p, o);
  const double rate = fit_decay_rate(tr, 10.0 * o.delta);
  const double predicted = predicted_rate(p);
  c.expect(std::isfinite(rate) && rate >= 0.5 * predicted, "fitted rate " + detail::num(rate));
  c.note("c=" + detail::num(p.c()) + " rate=" + detail::num(rate, 4) + " predicted=" + detail::num(predicted, 4));
  return {7, "coupling contraction", c.passed(), 0.0, c.detail()};
}

inline CriterionResult partition_bounds() {
  detail::Checks c;
  const auto W = CosineSeries::cosine(-1.0);
  const CosineSeries V;
  for (double beta : {0.5, 1.0, 1.5}) {
    const double z2 = partition_function_small_n(2, V, W, beta);
    const double ref = bessel_I(0, beta / 2.0);
    c.expect(std::abs(z2 - ref) <= tol::partition_quadrature, "Z2 at beta=" + detail::num(beta));
  }
  const double beta = 1.0;
  const double z3 = partition_function_small_n(3, V, W, beta);
  const double z_min = bessel_I(0, amplitude_roots(beta, 0.0).a_min);
  const double ratio = z3 / z_min;
  const double C = beta / (2.0 * (2.0 - beta)) + 0.1;
  const double lower = std::exp(-C / 3.0);
  c.expect(ratio > lower, "Z3/Z_min=" + detail::num(ratio) + " below e^{-C/3}=" + detail::num(lower));
  c.expect(ratio <= 1.0, "Z3/Z_min=" + detail::num(ratio, 8) + " exceeds 1");
  c.note("Z3/Z_min=" + detail::num(ratio, 8) + " e^{-C/3}=" + detail::num(lower, 6));
  return {8, "partition-function bounds", c.passed(), 0.0, c.detail()};
}

inline CriterionResult property_suites() {
  detail::Checks c;
  // Mass conservation per step.
  {
    const auto W = CosineSeries::cosine(-1.0);
    const auto nu0 = DensityField::from_function(
        [](double x) { return 1.0 + 0.5 * std::cos(two_pi * x) + 0.3 * std::sin(6.0 * std::numbers::pi * x); });
    double worst = 0.0;
    EvolveOptions o;
    o.dt = 2e-4;
    o.t_final = 0.2;
    o.record_stride = 1000000;
    o.on_step = [&](double, std::span<const std::complex<double>> modes) {
      const auto d = DensityField::from_modes(std::vector<std::complex<double>>(modes.begin(), modes.end()),
                                              nu0.grid_size());
      worst = std::max(worst, std::abs(d.integral() - 1.0));
    };
    evolve_mv(nu0, CosineSeries::cosine(-0.3), W, 3.0, o);
    c.expect(worst <= tol::mass_per_step, "mass drift " + detail::num(worst));
  }
  // r0 range, oddness, monotonicity.
  {
    bool ok = true;
    double prev = r0(-50.0);
    for (int i = -4999; i <= 5000; ++i) {
      const double a = i * 0.01;
      const double v = r0(a);
      ok = ok && std::abs(v) < 1.0 && r0(-a) == -v && v > prev && (a <= 0.0 || v > 0.0);
      prev = v;
    }
    c.expect(ok, "r0 properties");
  }
  // H-stability fixtures.
  {
    struct Fixture {
      CosineSeries w;
      bool stable;
    };
    const std::vector<Fixture> fixtures{
        {CosineSeries::cosine(-1.0), false},
        {CosineSeries::cosine(1.0), true},
        {CosineSeries{}, true},
        {CosineSeries::sine(0.5), false},
        {CosineSeries::cosine(1.0) + CosineSeries::cosine(-0.2, 2), false},
    };
    for (std::size_t i = 0; i < fixtures.size(); ++i)
      c.expect(h_stability(fixtures[i].w).stable() == fixtures[i].stable, "H-stability fixture " + std::to_string(i));
  }
  // Circle Wasserstein triangle inequality.
  {
    Stream rng(99, 0);
    auto random_density = [&] {
      std::vector<std::complex<double>> m(5);
      m[0] = 1.0;
      for (std::size_t k = 1; k < m.size(); ++k) m[k] = {0.12 * (rng.uniform() - 0.5), 0.12 * (rng.uniform() - 0.5)};
      return DensityField::from_modes(std::move(m), 256);
    };
    int violations = 0;
    for (int t = 0; t < 100; ++t) {
      const auto a = random_density(), b = random_density(), d = random_density();
      for (int p : {1, 2}) {
        const double ab = circle_wasserstein(a, b, p), bd = circle_wasserstein(b, d, p), ad = circle_wasserstein(a, d, p);
        if (ad > ab + bd + tol::triangle) ++violations;
      }
    }
    c.expect(violations == 0, std::to_string(violations) + " triangle violations");
  }
  // Gibbs N = 2 uniform first marginal.
  {
    GibbsOptions o;
    o.n_samples = 20000;
    o.thinning = 5;
    o.burn_in = 2000;
    o.seed = 31;
    o.chains = 4;
    const auto g = gibbs_sample(2, CosineSeries{}, CosineSeries::cosine(-1.0), 1.0, o);
    constexpr std::size_t bins = 32;
    std::vector<double> counts(bins, 0.0), expected(bins, static_cast<double>(g.count()) / bins);
    std::vector<double> first(g.count());
    for (std::size_t s = 0; s < g.count(); ++s) {
      const double x = g.sample(s)[0];
      counts[std::min(bins - 1, static_cast<std::size_t>(x * bins))] += 1.0;
    }
    const double pval = stats::chi_squared_p_value(counts, expected);
    c.expect(pval > tol::chi2_level, "chi-squared p=" + detail::num(pval));
    c.note("chi2 p=" + detail::num(pval, 3));
  }
  return {9, "property suites", c.passed(), 0.0, c.detail()};
}

struct Criterion {
  int id;
  std::string name;
  /// Wall-clock budget in seconds.
  double budget;
  std::function<CriterionResult()> run;
};

inline const std::vector<Criterion>& all_criteria() {
  static const std::vector<Criterion> list{
      {1, "critical temperature beta_c = 2", 1.0, critical_temperature},
      {2, "effective diffusivity and ellipticity bounds", 1.0, effective_diffusivity},
      {3, "non-commuting limits above beta_c", 5.0, non_commutativity},
      {4, "Gibbs fluctuation variances", 300.0, fluctuation_variances},
      {5, "MSD effective diffusivity", 600.0, msd_homogenization},
      {6, "PDE free-energy structure", 60.0, pde_energy_structure},
      {7, "coupling contraction", 300.0, coupling_contraction},
      {8, "partition-function bounds", 60.0, partition_bounds},
      {9, "property suites", 120.0, property_suites},
  };
  return list;
}

/// Runs one criterion, timing it and turning exceptions into failures.
inline CriterionResult run_criterion(const Criterion& c) {
  const auto t0 = std::chrono::steady_clock::now();
  CriterionResult r;
  try {
    r = c.run();
  } catch (const std::exception& e) {
    r.id = c.id;
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.id = c.id;
  r.name = c.name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (r.seconds > c.budget) {
    r.passed = false;
    r.detail += " | over the " + detail::num(c.budget) + " s budget";
  }
  return r;
}

inline std::string format_line(const CriterionResult& r) {
  char head[128];
  std::snprintf(head, sizeof head, "[%s] criterion %d: %s (%.2f s)", r.passed ? "PASS" : "FAIL", r.id,
                r.name.c_str(), r.seconds);
  return std::string(head) + (r.detail.empty() ? "" : " -- " + r.detail);
}

}  // namespace mvlab::verify
