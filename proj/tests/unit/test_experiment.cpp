#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "mvlab/experiment.hpp"

using namespace mvlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("mvlab_test_" + name);
  fs::remove_all(d);
  return d;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(Config, NormaliseFillsDefaults) {
  const json n = experiment::normalise({{"experiment", "evolve"}, {"output_dir", "x"}, {"parameters", {{"beta", 3.0}}}});
  EXPECT_EQ(n["parameters"]["beta"], 3.0);
  EXPECT_EQ(n["parameters"]["dt"], 2e-4);
  EXPECT_EQ(n["parameters"]["init"], "perturbed");
  const json m = experiment::normalise({{"experiment", "noncommute"}, {"output_dir", "x"}});
  EXPECT_TRUE(m["parameters"]["beta"].is_null());
}

TEST(Config, NormaliseRejects) {
  EXPECT_THROW(experiment::normalise({{"experiment", "nope"}, {"output_dir", "x"}}), validation_error);
  EXPECT_THROW(experiment::normalise({{"experiment", "evolve"}}), validation_error);
  EXPECT_THROW(experiment::normalise({{"experiment", "evolve"}, {"output_dir", "x"}, {"extra", 1}}), validation_error);
  EXPECT_THROW(experiment::normalise({{"experiment", "evolve"}, {"output_dir", "x"}, {"parameters", {{"bta", 1}}}}),
               validation_error);
  EXPECT_THROW(experiment::normalise({{"experiment", "evolve"}, {"output_dir", "x"}, {"parameters", {{"beta", "1"}}}}),
               validation_error);
  EXPECT_THROW(experiment::normalise({{"experiment", "evolve"}, {"output_dir", "x"}, {"parameters", {{"grid", 2.5}}}}),
               validation_error);
  EXPECT_THROW(experiment::normalise(json::array()), validation_error);
}

TEST(Config, Overrides) {
  json c{{"experiment", "evolve"}, {"output_dir", "x"}};
  experiment::apply_override(c, "beta=2.5");
  experiment::apply_override(c, "parameters.init=uniform");
  experiment::apply_override(c, "output_dir=y");
  EXPECT_EQ(c["parameters"]["beta"], 2.5);
  EXPECT_EQ(c["parameters"]["init"], "uniform");
  EXPECT_EQ(c["output_dir"], "y");
  EXPECT_THROW(experiment::apply_override(c, "beta"), validation_error);
  EXPECT_THROW(experiment::apply_override(c, "=1"), validation_error);
}

TEST(Config, SchemaListsEveryExperiment) {
  const json s = experiment::schema();
  std::set<std::string> names;
  for (const auto& branch : s["oneOf"]) names.insert(branch["properties"]["experiment"]["const"].get<std::string>());
  EXPECT_EQ(names, (std::set<std::string>{"bifurcation", "evolve", "audit", "homogenize", "noncommute", "fluctuations",
                                          "gibbs", "msd", "couple"}));
  EXPECT_EQ(experiment::registry().size(), 9u);
}

TEST(Config, HashIsStableAndSensitive) {
  const json a = experiment::normalise({{"experiment", "bifurcation"}, {"output_dir", "x"}});
  const json b = experiment::normalise(
      {{"output_dir", "x"}, {"parameters", {{"beta_points", 36}, {"eta", 0.0}}}, {"experiment", "bifurcation"}});
  EXPECT_EQ(experiment::config_hash(a), experiment::config_hash(b));
  EXPECT_EQ(experiment::config_hash(a).size(), 16u);
  json c = a;
  c["parameters"]["eta"] = 0.1;
  EXPECT_NE(experiment::config_hash(a), experiment::config_hash(c));
}

TEST(Run, BifurcationArtifactsAndManifest) {
  const fs::path dir = scratch("bif");
  const json n = experiment::normalise({{"experiment", "bifurcation"},
                                        {"output_dir", dir.string()},
                                        {"parameters", {{"beta_points", 8}, {"grid", 256}}}});
  const auto r = experiment::run(n, "test");
  EXPECT_TRUE(r.checks_passed);
  const auto rows = csv_rows(slurp(dir / "bifurcation.csv"));
  ASSERT_EQ(rows.size(), 9u);
  EXPECT_EQ(rows[0][0], "beta");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double beta = std::stod(rows[i][0]);
    if (beta <= 2.0) EXPECT_EQ(std::stod(rows[i][1]), 0.0);
    else EXPECT_GT(std::stod(rows[i][1]), 0.0);
  }
  const json m = json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["config_hash"], experiment::config_hash(m["config"]));
  EXPECT_EQ(experiment::normalise(m["config"]), n);
  EXPECT_TRUE(m["seed"].is_null());
  EXPECT_FALSE(m["stochastic"].get<bool>());
  const auto first = slurp(dir / "bifurcation.csv");
  experiment::run(n, "test");
  EXPECT_EQ(slurp(dir / "bifurcation.csv"), first);
  fs::remove_all(dir);
}

TEST(Run, UniformEvolutionIsStationary) {
  const fs::path dir = scratch("evolve");
  const json n = experiment::normalise({{"experiment", "evolve"},
                                        {"output_dir", dir.string()},
                                        {"parameters", {{"init", "uniform"}, {"T", 0.05}, {"grid", 64}}}});
  experiment::run(n, "test");
  const std::string trace = slurp(dir / "trace.csv");
  const auto rows = csv_rows(trace);
  ASSERT_GT(rows.size(), 3u);
  for (std::size_t i = 2; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i][1], rows[1][1]);
    EXPECT_EQ(std::stod(rows[i][2]), 0.0);
  }
  for (const auto& row : csv_rows(slurp(dir / "final_density.csv"))) {
    if (row[0] == "x") continue;
    EXPECT_NEAR(std::stod(row[1]), 1.0, 1e-12);
  }
  experiment::run(n, "test");
  EXPECT_EQ(slurp(dir / "trace.csv"), trace);
  fs::remove_all(dir);
}

TEST(Run, NonCommuteGapIsPositive) {
  const fs::path dir = scratch("noncommute");
  const json n = experiment::normalise({{"experiment", "noncommute"}, {"output_dir", dir.string()}});
  const auto r = experiment::run(n, "test");
  EXPECT_TRUE(r.checks_passed);
  const json rep = json::parse(slurp(dir / "report.json"));
  EXPECT_GT(rep["relative_gap"].get<double>(), 0.0);
  EXPECT_GT(rep["beta"].get<double>(), rep["beta_c"].get<double>());
  fs::remove_all(dir);
}

TEST(Run, UnwritableOutputDirThrows) {
  const fs::path file = scratch("blocker");
  { std::ofstream(file) << "x"; }
  const json n = experiment::normalise({{"experiment", "bifurcation"}, {"output_dir", (file / "sub").string()}});
  EXPECT_THROW(experiment::run(n, "test"), std::runtime_error);
  fs::remove_all(file);
}
