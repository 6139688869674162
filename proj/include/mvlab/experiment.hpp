#pragma once

// Named experiments driven by a JSON config: parameter schema and
// validation, dispatch to the library, artifacts and the run manifest.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvlab/coupling.hpp"
#include "mvlab/homogenize.hpp"
#include "mvlab/io.hpp"
#include "mvlab/particles.hpp"
#include "mvlab/pde.hpp"
#include "mvlab/stationary.hpp"

namespace mvlab::experiment {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class ParamType { number, integer, boolean, string, series, number_list };

inline const char* to_string(ParamType t) {
  switch (t) {
    case ParamType::number: return "number";
    case ParamType::integer: return "integer";
    case ParamType::boolean: return "boolean";
    case ParamType::string: return "string";
    case ParamType::series: return "series";
    case ParamType::number_list: return "number_list";
  }
  return "?";
}

struct ParamSpec {
  std::string name;
  ParamType type;
  /// null for "no default" (optional parameter).
  json default_value;
  std::string description;
};

/// A validated parameter set with defaults filled in.
class Params {
 public:
  explicit Params(json j) : j_(std::move(j)) {}
  double num(const std::string& k) const { return j_.at(k).get<double>(); }
  std::int64_t integer(const std::string& k) const { return j_.at(k).get<std::int64_t>(); }
  std::size_t count(const std::string& k) const { return static_cast<std::size_t>(j_.at(k).get<std::int64_t>()); }
  bool flag(const std::string& k) const { return j_.at(k).get<bool>(); }
  std::string str(const std::string& k) const { return j_.at(k).get<std::string>(); }
  bool has(const std::string& k) const { return j_.contains(k) && !j_.at(k).is_null(); }
  CosineSeries series(const std::string& k) const { return j_.at(k).get<CosineSeries>(); }
  std::vector<double> list(const std::string& k) const { return j_.at(k).get<std::vector<double>>(); }
  const json& raw() const { return j_; }

 private:
  json j_;
};

struct Outcome {
  std::vector<std::string> outputs;
  /// Acceptance-tagged checks (name, passed); only enforced under --check.
  std::vector<std::pair<std::string, bool>> checks;
  json summary = json::object();
};

struct Experiment {
  std::string name;
  std::string description;
  bool stochastic = false;
  std::vector<ParamSpec> params;
  std::function<Outcome(const Params&, const fs::path&)> run;
};

namespace detail {

inline void write_text(const fs::path& dir, const std::string& file, const std::string& text, Outcome& out) {
  io::atomic_write(dir / file, text);
  out.outputs.push_back(file);
}

inline void write_json(const fs::path& dir, const std::string& file, const json& j, Outcome& out) {
  io::write_json(dir / file, j);
  out.outputs.push_back(file);
}

// V = -eta J cos, W = -J cos unless V / W are given explicitly.
inline std::pair<CosineSeries, CosineSeries> potentials(const Params& p) {
  const double J = p.num("coupling");
  const double eta = p.num("eta");
  CosineSeries V = p.has("V") ? p.series("V") : CosineSeries::cosine(-eta * J);
  CosineSeries W = p.has("W") ? p.series("W") : CosineSeries::cosine(-J);
  return {std::move(V), std::move(W)};
}

inline std::vector<ParamSpec> potential_params() {
  return {{"eta", ParamType::number, 0.0, "tilt: V = -eta J cos(2 pi x)"},
          {"coupling", ParamType::number, 1.0, "J in W = -J cos(2 pi x)"},
          {"V", ParamType::series, nullptr, "explicit confinement {cos: [...], sin: [...]}"},
          {"W", ParamType::series, nullptr, "explicit interaction {cos: [...], sin: [...]}"}};
}

inline std::vector<ParamSpec> with(std::vector<ParamSpec> a, const std::vector<ParamSpec>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline DensityField initial_density(const Params& p, std::size_t grid) {
  const std::string init = p.str("init");
  if (init == "uniform") return DensityField::uniform(grid);
  const double amp = p.num("init_amplitude");
  if (init == "perturbed")
    return DensityField::from_function([&](double x) { return 1.0 + amp * std::cos(two_pi * x); }, grid);
  if (init == "von_mises") return DensityField::von_mises(amp, grid);
  throw validation_error("init must be uniform, perturbed or von_mises");
}

inline std::string density_csv(const DensityField& d) {
  std::string s = "x,density\r\n";
  for (std::size_t j = 0; j < d.grid_size(); ++j) {
    std::vector<std::string> f{io::format_double(d.grid_point(j)), io::format_double(d.values()[j])};
    s += io::csv_row(f);
  }
  return s;
}

inline json audit_json(const AuditReport& a) {
  auto finite = [](double v) { return std::isfinite(v) ? std::optional<double>(v) : std::nullopt; };
  return json{{"monotone", a.monotone},
              {"fitted_rate", io::json_number(finite(a.fitted_rate))},
              {"algebraic_exponent", io::json_number(finite(a.algebraic_exponent))},
              {"energy_dissipation_error", a.energy_dissipation_error},
              {"energy_dissipation_ok", a.energy_dissipation_ok},
              {"max_dissipation", a.max_dissipation}};
}

// Target for the evolution trace: none, uniform, or the minimiser found by
// the fixed-point solver.
inline std::optional<DensityField> evolution_target(const Params& p, const CosineSeries& V, const CosineSeries& W,
                                                    double beta, std::size_t grid) {
  const std::string t = p.str("target");
  if (t == "none") return std::nullopt;
  if (t == "uniform") return DensityField::uniform(grid);
  if (t == "minimiser") {
    if (const auto fam = detect_cosine_family(V, W))
      return DensityField::von_mises(amplitude_roots(beta * fam->coupling, fam->eta).a_min, grid);
    return solve_stationary(V, W, beta, DensityField::von_mises(1.0, grid)).density;
  }
  throw validation_error("target must be none, uniform or minimiser");
}

inline std::vector<ParamSpec> evolve_params() {
  return with({{"beta", ParamType::number, 1.0, "inverse temperature"},
               {"dt", ParamType::number, 2e-4, "time step"},
               {"T", ParamType::number, 1.0, "final time"},
               {"grid", ParamType::integer, 256, "grid points (power of two >= 64)"},
               {"record_stride", ParamType::integer, 10, "steps between trace records"},
               {"init", ParamType::string, "perturbed", "uniform | perturbed | von_mises"},
               {"init_amplitude", ParamType::number, 0.2, "perturbation or von Mises amplitude"},
               {"target", ParamType::string, "none", "none | uniform | minimiser"}},
              potential_params());
}

inline std::pair<EvolveResult, Outcome> run_evolution(const Params& p, const fs::path& dir) {
  const auto [V, W] = potentials(p);
  const double beta = p.num("beta");
  const std::size_t grid = p.count("grid");
  EvolveOptions o;
  o.dt = p.num("dt");
  o.t_final = p.num("T");
  o.record_stride = p.count("record_stride");
  if (o.record_stride == 0) throw validation_error("record_stride must be positive");
  o.target = evolution_target(p, V, W, beta, grid);
  auto res = evolve_mv(initial_density(p, grid), V, W, beta, o);
  Outcome out;
  write_text(dir, "trace.csv", trace_csv(res.trace), out);
  write_text(dir, "final_density.csv", density_csv(res.final_density), out);
  return {std::move(res), std::move(out)};
}

}  // namespace detail

inline const std::vector<Experiment>& registry() {
  using detail::with;
  static const std::vector<Experiment> list{
      {"bifurcation",
       "amplitude branches a_min, a_star of V = -eta cos, W = -cos over a beta grid",
       false,
       {{"eta", ParamType::number, 0.0, "tilt"},
        {"beta_min", ParamType::number, 0.5, "first beta"},
        {"beta_max", ParamType::number, 4.0, "last beta"},
        {"beta_points", ParamType::integer, 36, "number of beta values"},
        {"grid", ParamType::integer, 512, "grid for free energies"}},
       [](const Params& p, const fs::path& dir) {
         const std::size_t n = p.count("beta_points");
         if (n < 2) throw validation_error("beta_points must be >= 2");
         std::vector<double> betas(n);
         for (std::size_t i = 0; i < n; ++i)
           betas[i] = p.num("beta_min") + (p.num("beta_max") - p.num("beta_min")) * static_cast<double>(i) /
                                              static_cast<double>(n - 1);
         const double eta = p.num("eta");
         const auto rows = bifurcation_scan(betas, eta, p.count("grid"));
         std::string csv = "beta,a_min,a_star,energy_gap,min_branch_is_minimiser\r\n";
         Outcome out;
         const double bc = critical_beta(eta);
         bool transition = true;
         for (const auto& r : rows) {
           std::vector<std::string> f{io::format_double(r.beta), io::format_double(r.a_min),
                                      io::format_optional(r.a_star), io::format_double(r.energy_gap),
                                      r.min_branch_is_minimiser ? "true" : "false"};
           csv += io::csv_row(f);
           if (eta == 0.0) transition = transition && ((r.beta <= 2.0) == (r.a_min == 0.0));
           else transition = transition && (r.beta > bc) == r.a_star.has_value();
         }
         detail::write_text(dir, "bifurcation.csv", csv, out);
         out.summary = {{"beta_c", bc}, {"rows", rows.size()}};
         out.checks.push_back({eta == 0.0 ? "a_min = 0 exactly up to beta = 2" : "a_star exists exactly above beta_c",
                               transition});
         return out;
       }},
      {"evolve",
       "pseudospectral McKean-Vlasov evolution with free-energy trace",
       false,
       detail::evolve_params(),
       [](const Params& p, const fs::path& dir) {
         auto [res, out] = detail::run_evolution(p, dir);
         const auto a = convergence_audit(res.trace);
         out.summary = {{"final_free_energy", res.trace.free_energy.back()},
                        {"final_dissipation", res.trace.dissipation.back()},
                        {"audit", detail::audit_json(a)}};
         out.checks.push_back({"free energy nonincreasing", a.monotone});
         return out;
       }},
      {"audit",
       "evolution plus the energy-dissipation and convergence-rate audit",
       false,
       detail::evolve_params(),
       [](const Params& p, const fs::path& dir) {
         auto [res, out] = detail::run_evolution(p, dir);
         const auto a = convergence_audit(res.trace);
         detail::write_json(dir, "audit.json", detail::audit_json(a), out);
         out.summary = detail::audit_json(a);
         out.checks.push_back({"free energy nonincreasing", a.monotone});
         out.checks.push_back({"dE/dt matches dissipation within 5%", a.energy_dissipation_ok});
         return out;
       }},
      {"homogenize",
       "corrector and effective diffusivity of each steady state of the tilted Kuramoto family",
       false,
       {{"beta", ParamType::number, 4.0, "inverse temperature"},
        {"eta", ParamType::number, 0.0, "tilt"},
        {"grid", ParamType::integer, 1024, "grid points"}},
       [](const Params& p, const fs::path& dir) {
         const double beta = p.num("beta"), eta = p.num("eta");
         const std::size_t grid = p.count("grid");
         const auto roots = amplitude_roots(beta, eta);
         Outcome out;
         json states = json::array();
         bool ok = true;
         std::string csv = "x,amplitude,density,psi,psi_prime\r\n";
         for (double a : roots.roots) {
           const auto nu = DensityField::von_mises(a, grid);
           const auto U = mean_field_potential(nu, CosineSeries::cosine(-eta), CosineSeries::cosine(-1.0));
           const auto [prof, quad] = corrector_1d(nu, beta, U);
           const auto eff = effective_diffusion_from_amplitude(a, beta);
           ok = ok && quad.lower_bound <= eff.value * (1.0 + 1e-9) && eff.value <= quad.upper_bound;
           states.push_back({{"amplitude", a},
                             {"A", eff.value},
                             {"A_quadrature", quad.value},
                             {"lower_bound", quad.lower_bound},
                             {"upper_bound", quad.upper_bound},
                             {"source", to_string(eff.source)}});
           for (std::size_t j = 0; j < grid; ++j) {
             std::vector<std::string> f{io::format_double(nu.grid_point(j)), io::format_double(a),
                                        io::format_double(nu.values()[j]), io::format_double(prof.psi[j]),
                                        io::format_double(prof.psi_prime[j])};
             csv += io::csv_row(f);
           }
         }
         detail::write_json(dir, "effective_diffusion.json", json{{"beta", beta}, {"eta", eta}, {"states", states}},
                            out);
         detail::write_text(dir, "corrector.csv", csv, out);
         out.summary = {{"states", states.size()}};
         out.checks.push_back({"A = beta^-1 / I0(a)^2 within the ellipticity bounds", ok});
         return out;
       }},
      {"noncommute",
       "steady states, effective diffusivities and kernel gap above beta_c(eta)",
       false,
       {{"eta", ParamType::number, 0.5, "tilt"},
        {"beta", ParamType::number, nullptr, "inverse temperature (default beta_c(eta) + 1)"},
        {"grid", ParamType::integer, 1024, "grid points"}},
       [](const Params& p, const fs::path& dir) {
         const double eta = p.num("eta");
         const double beta = p.has("beta") ? p.num("beta") : critical_beta(eta) + 1.0;
         const auto r = non_commutativity_report(eta, beta, p.count("grid"));
         Outcome out;
         detail::write_json(dir, "report.json", to_json(r), out);
         out.summary = to_json(r);
         out.checks.push_back({"relative diffusivity gap > 1%", r.relative_gap && *r.relative_gap > 0.01});
         return out;
       }},
      {"fluctuations",
       "MALA samples of the N-particle Gibbs measure and fluctuation-mode variances",
       true,
       with({{"N", ParamType::integer, 256, "particles"},
             {"beta", ParamType::number, 1.0, "inverse temperature"},
             {"samples", ParamType::integer, 20000, "samples per chain"},
             {"thinning", ParamType::integer, 5, "MALA steps per sample"},
             {"burn_in", ParamType::integer, 5000, "tuning steps"},
             {"chains", ParamType::integer, 1, "independent chains"},
             {"seed", ParamType::integer, 1, "RNG seed"},
             {"modes", ParamType::number_list, json::array({1, -1, 2, -2, 3, -3}), "mode indices k"}},
            detail::potential_params()),
       [](const Params& p, const fs::path& dir) {
         const auto [V, W] = detail::potentials(p);
         const double beta = p.num("beta");
         GibbsOptions o;
         o.n_samples = p.count("samples");
         o.thinning = p.count("thinning");
         o.burn_in = p.count("burn_in");
         o.chains = p.count("chains");
         o.seed = static_cast<std::uint64_t>(p.integer("seed"));
         const auto g = gibbs_sample(p.count("N"), V, W, beta, o);
         const auto fam = detect_cosine_family(V, W);
         const DensityField ref =
             fam ? DensityField::von_mises(amplitude_roots(beta * fam->coupling, fam->eta).a_min)
                 : solve_stationary(V, W, beta, DensityField::von_mises(1.0)).density;
         std::vector<int> ks;
         for (double k : p.list("modes")) ks.push_back(static_cast<int>(k));
         const auto modes = fluctuation_modes(g, ks, ref);
         const auto e = interaction_fluctuation_energy(g, W, ref);
         json jm = json::array();
         std::string csv = "k,variance,stderr,effective_samples\r\n";
         const bool kuramoto = V.is_constant() && W == CosineSeries::cosine(-1.0) && beta < 2.0;
         bool ok = true;
         for (const auto& m : modes) {
           jm.push_back({{"k", m.mode_index},
                         {"variance", m.variance},
                         {"stderr", m.standard_error},
                         {"effective_samples", m.effective_samples}});
           std::vector<std::string> f{std::to_string(m.mode_index), io::format_double(m.variance),
                                      io::format_double(m.standard_error), io::format_double(m.effective_samples)};
           csv += io::csv_row(f);
           if (kuramoto && m.mode_index != 0) {
             const double expected = std::abs(m.mode_index) == 1 ? 2.0 / (2.0 - beta) : 1.0;
             ok = ok && std::abs(m.variance - expected) <= 0.15 * expected;
           }
         }
         Outcome out;
         detail::write_text(dir, "fluctuations.csv", csv, out);
         out.summary = {{"acceptance", g.acceptance},
                        {"steps", g.steps},
                        {"modes", jm},
                        {"interaction_energy", e.value},
                        {"interaction_energy_stderr", e.standard_error}};
         if (kuramoto) {
           ok = ok && std::abs(e.value + 2.0 / (2.0 - beta)) <= 0.15 * 2.0 / (2.0 - beta);
           out.checks.push_back({"mode variances and interaction energy within 15%", ok});
         }
         return out;
       }},
      {"gibbs",
       "MALA samples of the N-particle Gibbs measure (framed binary dump)",
       true,
       with({{"N", ParamType::integer, 2, "particles"},
             {"beta", ParamType::number, 1.0, "inverse temperature"},
             {"samples", ParamType::integer, 10000, "samples per chain"},
             {"thinning", ParamType::integer, 5, "MALA steps per sample"},
             {"burn_in", ParamType::integer, 2000, "tuning steps"},
             {"chains", ParamType::integer, 1, "independent chains"},
             {"seed", ParamType::integer, 1, "RNG seed"}},
            detail::potential_params()),
       [](const Params& p, const fs::path& dir) {
         const auto [V, W] = detail::potentials(p);
         GibbsOptions o;
         o.n_samples = p.count("samples");
         o.thinning = p.count("thinning");
         o.burn_in = p.count("burn_in");
         o.chains = p.count("chains");
         o.seed = static_cast<std::uint64_t>(p.integer("seed"));
         const auto g = gibbs_sample(p.count("N"), V, W, p.num("beta"), o);
         Outcome out;
         io::write_frames(dir / "samples", g.samples, g.count(), g.N, o.seed,
                          json{{"description", "quotient configurations"}, {"beta", g.beta}});
         out.outputs.push_back("samples.bin");
         out.outputs.push_back("samples.json");
         double r = 0.0;
         for (std::size_t s = 0; s < g.count(); ++s) r += std::abs(order_parameter(g.sample(s)));
         out.summary = {{"acceptance", g.acceptance}, {"steps", g.steps}, {"mean_order_parameter", r / g.count()}};
         out.checks.push_back({"acceptance in [0.1, 0.95]", g.acceptance >= 0.1 && g.acceptance <= 0.95});
         return out;
       }},
      {"msd",
       "mean-squared displacement of single particles in the frozen steady-state field",
       true,
       with({{"beta", ParamType::number, 4.0, "inverse temperature"},
             {"paths", ParamType::integer, 1000, "independent paths"},
             {"dt", ParamType::number, 1e-3, "time step"},
             {"T", ParamType::number, 200.0, "final time"},
             {"record_stride", ParamType::integer, 1000, "steps between records"},
             {"seed", ParamType::integer, 1, "RNG seed"}},
            detail::potential_params()),
       [](const Params& p, const fs::path& dir) {
         const auto [V, W] = detail::potentials(p);
         const double beta = p.num("beta");
         const auto fam = detect_cosine_family(V, W);
         DensityField nu = fam ? DensityField::von_mises(amplitude_roots(beta * fam->coupling, fam->eta).a_min)
                               : solve_stationary(V, W, beta, DensityField::von_mises(1.0)).density;
         const auto m = frozen_field_msd(nu, V, W, beta, p.count("paths"), p.num("dt"), p.num("T"),
                                         p.count("record_stride"), static_cast<std::uint64_t>(p.integer("seed")));
         const auto fit = msd_diffusivity(m);
         const auto U = mean_field_potential(nu, V, W);
         const auto eff = corrector_1d(DensityField::gibbs(U, beta, nu.grid_size()), beta, U).second;
         std::string csv = "time,msd\r\n";
         for (std::size_t f = 0; f < m.times.size(); ++f) {
           double s = 0.0;
           for (std::size_t q = 0; q < m.paths; ++q) s += m.squared_displacement[q * m.times.size() + f];
           std::vector<std::string> row{io::format_double(m.times[f]), io::format_double(s / m.paths)};
           csv += io::csv_row(row);
         }
         Outcome out;
         detail::write_text(dir, "msd.csv", csv, out);
         out.summary = {{"A_hat", fit.A_hat},       {"stderr", fit.standard_error}, {"fit_r2", fit.fit_r2},
                        {"diffusive", fit.diffusive}, {"A_homogenized", eff.value},  {"lower_bound", eff.lower_bound},
                        {"upper_bound", eff.upper_bound}};
         out.checks.push_back({"A_hat within 5% of the homogenized value",
                               std::abs(fit.A_hat - eff.value) <= 0.05 * eff.value});
         out.checks.push_back({"fit R^2 >= 0.99", fit.diffusive});
         return out;
       }},
      {"couple",
       "reflection/synchronous coupling and the contraction of E f(gamma_t)",
       true,
       with({{"beta", ParamType::number, 0.3, "inverse temperature"},
             {"mode", ParamType::string, "frozen", "frozen | mean_field"},
             {"delta", ParamType::number, 1e-3, "reflection cutoff"},
             {"dt", ParamType::number, 1e-5, "time step"},
             {"T", ParamType::number, 0.05, "final time"},
             {"replicas", ParamType::integer, 1000, "coupled pairs"},
             {"record_stride", ParamType::integer, 50, "steps between records"},
             {"seed", ParamType::integer, 1, "RNG seed"}},
            detail::potential_params()),
       [](const Params& p, const fs::path& dir) {
         const auto [V, W] = detail::potentials(p);
         const double beta = p.num("beta");
         const auto fam = detect_cosine_family(V, W);
         StationaryState target;
         if (fam)
           target = amplitude_state(amplitude_roots(beta * fam->coupling, fam->eta).a_min, beta, fam->eta, V, W);
         else
           target = solve_stationary(V, W, beta, DensityField::von_mises(1.0));
         const DistanceProfile prof(semiconvexity_kappa(V, W), beta);
         CouplingOptions o;
         const std::string mode = p.str("mode");
         if (mode != "frozen" && mode != "mean_field") throw validation_error("mode must be frozen or mean_field");
         o.mode = mode == "frozen" ? CouplingMode::frozen : CouplingMode::mean_field;
         o.delta = p.num("delta");
         o.dt = p.num("dt");
         o.t_final = p.num("T");
         o.replicas = p.count("replicas");
         o.record_stride = p.count("record_stride");
         o.seed = static_cast<std::uint64_t>(p.integer("seed"));
         const auto tr = simulate_coupling(V, W, target, DensityField::uniform(), beta, prof, o);
         const double rate = fit_decay_rate(tr, 10.0 * o.delta);
         Outcome out;
         detail::write_text(dir, "coupling.csv", coupling_csv(tr), out);
         out.summary = {{"c", prof.c()},
                        {"kappa", prof.kappa()},
                        {"fitted_rate", io::json_number(std::isfinite(rate) ? std::optional(rate) : std::nullopt)},
                        {"predicted_rate", predicted_rate(prof)},
                        {"high_temperature_threshold",
                         io::json_number(std::isfinite(high_temperature_threshold(V, W))
                                             ? std::optional(high_temperature_threshold(V, W))
                                             : std::nullopt)},
                        {"delta", o.delta}};
         if (o.mode == CouplingMode::frozen)
           out.checks.push_back({"fitted rate >= c / beta", std::isfinite(rate) && rate >= 0.5 * predicted_rate(prof)});
         return out;
       }},
  };
  return list;
}

inline const Experiment& find(const std::string& name) {
  for (const auto& e : registry())
    if (e.name == name) return e;
  throw validation_error("unknown experiment '" + name + "'");
}

/// JSON Schema (draft 2020-12) of the config file.
inline json schema() {
  json variants = json::array();
  for (const auto& e : registry()) {
    json props = json::object();
    for (const auto& p : e.params) {
      json s;
      switch (p.type) {
        case ParamType::number: s = {{"type", "number"}}; break;
        case ParamType::integer: s = {{"type", "integer"}}; break;
        case ParamType::boolean: s = {{"type", "boolean"}}; break;
        case ParamType::string: s = {{"type", "string"}}; break;
        case ParamType::number_list: s = {{"type", "array"}, {"items", {{"type", "number"}}}}; break;
        case ParamType::series:
          s = {{"type", "object"},
               {"properties", {{"cos", {{"type", "array"}, {"items", {{"type", "number"}}}}},
                               {"sin", {{"type", "array"}, {"items", {{"type", "number"}}}}}}},
               {"additionalProperties", false}};
          break;
      }
      s["description"] = p.description;
      if (!p.default_value.is_null()) s["default"] = p.default_value;
      props[p.name] = s;
    }
    variants.push_back({{"type", "object"},
                        {"description", e.description},
                        {"properties",
                         {{"experiment", {{"const", e.name}}},
                          {"output_dir", {{"type", "string"}}},
                          {"parameters", {{"type", "object"}, {"properties", props}, {"additionalProperties", false}}}}},
                        {"required", {"experiment", "output_dir"}},
                        {"additionalProperties", false}});
  }
  return {{"$schema", "https://json-schema.org/draft/2020-12/schema"},
          {"title", "mvlab experiment config"},
          {"oneOf", variants}};
}

inline bool matches(ParamType t, const json& v) {
  switch (t) {
    case ParamType::number: return v.is_number();
    case ParamType::integer: return v.is_number_integer();
    case ParamType::boolean: return v.is_boolean();
    case ParamType::string: return v.is_string();
    case ParamType::number_list: {
      if (!v.is_array()) return false;
      for (const auto& x : v)
        if (!x.is_number()) return false;
      return true;
    }
    case ParamType::series: {
      try {
        (void)v.get<CosineSeries>();
        return true;
      } catch (...) {
        return false;
      }
    }
  }
  return false;
}

/// Validates the config and fills parameter defaults.
inline json normalise(const json& config) {
  if (!config.is_object()) throw validation_error("config must be a JSON object");
  for (const auto& [k, v] : config.items())
    if (k != "experiment" && k != "output_dir" && k != "parameters") throw validation_error("unknown config key '" + k + "'");
  if (!config.contains("experiment") || !config["experiment"].is_string())
    throw validation_error("config needs a string 'experiment'");
  if (!config.contains("output_dir") || !config["output_dir"].is_string())
    throw validation_error("config needs a string 'output_dir'");
  const auto& e = find(config["experiment"].get<std::string>());
  json given = config.value("parameters", json::object());
  if (!given.is_object()) throw validation_error("'parameters' must be an object");
  json params = json::object();
  for (const auto& [k, v] : given.items()) {
    const auto it = std::find_if(e.params.begin(), e.params.end(), [&](const ParamSpec& p) { return p.name == k; });
    if (it == e.params.end()) throw validation_error("unknown parameter '" + k + "' for " + e.name);
    if (!v.is_null() && !matches(it->type, v))
      throw validation_error("parameter '" + k + "' must be of type " + to_string(it->type));
    params[k] = v;
  }
  for (const auto& p : e.params)
    if (!params.contains(p.name)) params[p.name] = p.default_value;
  return {{"experiment", e.name}, {"output_dir", config["output_dir"]}, {"parameters", params}};
}

/// Applies key=value; keys address parameters (optionally prefixed with
/// "parameters."), or experiment / output_dir. Values parse as JSON, falling
/// back to a string.
inline void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw validation_error("--set expects key=value, got '" + assignment + "'");
  std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  if (key == "experiment" || key == "output_dir") {
    config[key] = value;
    return;
  }
  if (key.rfind("parameters.", 0) == 0) key = key.substr(11);
  config["parameters"][key] = value;
}

/// FNV-1a 64 of the canonical (sorted-key, compact) dump.
inline std::string config_hash(const json& normalised) {
  const std::string s = normalised.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct RunResult {
  json manifest;
  bool checks_passed = true;
};

inline std::string compiler_string() {
#if defined(__clang__)
  return "clang " __clang_version__;
#elif defined(__GNUC__)
  return "gcc " __VERSION__;
#else
  return "unknown";
#endif
}

/// Runs a normalised config; writes artifacts and manifest.json into its
/// output directory.
inline RunResult run(const json& normalised, const std::string& version) {
  const auto& e = find(normalised.at("experiment").get<std::string>());
  const fs::path dir = normalised.at("output_dir").get<std::string>();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  const Params params(normalised.at("parameters"));
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out = e.run(params, dir);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  RunResult r;
  json checks = json::array();
  for (const auto& [name, ok] : out.checks) {
    checks.push_back({{"name", name}, {"passed", ok}});
    r.checks_passed = r.checks_passed && ok;
  }
  detail::write_json(dir, "summary.json", out.summary, out);
  r.manifest = {{"experiment", e.name},
                {"config", normalised},
                {"config_hash", config_hash(normalised)},
                {"seed", params.has("seed") ? json(params.integer("seed")) : json(nullptr)},
                {"stochastic", e.stochastic},
                {"versions",
                 {{"mvlab", version},
                  {"compiler", compiler_string()},
                  {"nlohmann_json",
                   std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                       "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
                {"threads", thread_count()},
                {"wall_time_seconds", wall},
                {"outputs", out.outputs},
                {"checks", checks}};
  io::write_json(dir / "manifest.json", r.manifest);
  return r;
}

}  // namespace mvlab::experiment
