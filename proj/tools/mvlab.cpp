#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mvlab/experiment.hpp"
#include "mvlab/verify/criteria.hpp"

#ifndef MVLAB_VERSION
#define MVLAB_VERSION "0.0.0"
#endif

namespace {

enum Exit { ok = 0, validation = 2, numerical = 3, statistical = 4, io_failure = 5 };

using nlohmann::json;

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  json j = json::parse(ss.str(), nullptr, false);
  if (j.is_discarded()) throw mvlab::validation_error("config " + path + " is not valid JSON");
  return j;
}

int run_command(const std::string& path, const std::vector<std::string>& sets, const std::string& out_dir,
                bool check) {
  json config = load_config(path);
  for (const auto& s : sets) mvlab::experiment::apply_override(config, s);
  if (!out_dir.empty()) config["output_dir"] = out_dir;
  const json normalised = mvlab::experiment::normalise(config);
  const auto r = mvlab::experiment::run(normalised, MVLAB_VERSION);
  std::printf("%s -> %s (hash %s, %.2f s)\n", normalised["experiment"].get<std::string>().c_str(),
              normalised["output_dir"].get<std::string>().c_str(), r.manifest["config_hash"].get<std::string>().c_str(),
              r.manifest["wall_time_seconds"].get<double>());
  for (const auto& c : r.manifest["checks"])
    std::printf("  [%s] %s\n", c["passed"].get<bool>() ? "PASS" : "FAIL", c["name"].get<std::string>().c_str());
  return check && !r.checks_passed ? statistical : ok;
}

std::set<int> suite_ids(const std::string& suite) {
  if (suite == "acceptance" || suite == "all") return {};
  if (suite == "quick") return {1, 2, 3, 6, 8};
  std::set<int> ids;
  std::stringstream ss(suite);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int id = std::stoi(item, &used);
      if (used != item.size() || id < 1 || id > 9) throw std::invalid_argument(item);
      ids.insert(id);
    } catch (const std::exception&) {
      throw mvlab::validation_error("unknown suite '" + suite + "' (acceptance, quick, or ids like 1,4)");
    }
  }
  return ids;
}

int check_command(const std::string& suite) {
  const auto ids = suite_ids(suite);
  bool all = true;
  for (const auto& c : mvlab::verify::all_criteria()) {
    if (!ids.empty() && !ids.count(c.id)) continue;
    const auto r = mvlab::verify::run_criterion(c);
    std::printf("%s\n", mvlab::verify::format_line(r).c_str());
    std::fflush(stdout);
    all = all && r.passed;
  }
  return all ? ok : statistical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mvlab: McKean-Vlasov experiments on the circle"};
  app.set_version_flag("--version", std::string(MVLAB_VERSION));
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
  std::string config_path, out_dir;
  std::vector<std::string> sets;
  bool check = false;
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--set", sets, "override key=value (repeatable)");
  run->add_option("--out", out_dir, "override output_dir");
  run->add_flag("--check", check, "exit 4 when an acceptance-tagged check fails");

  auto* chk = app.add_subcommand("check", "run acceptance criteria (MVLAB_THREADS sets threads)");
  std::string suite = "acceptance";
  chk->add_option("suite", suite, "acceptance | quick | comma-separated ids");

  auto* sch = app.add_subcommand("schema", "print the config JSON schema");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_command(config_path, sets, out_dir, check);
    if (*chk) return check_command(suite);
    if (*sch) {
      std::printf("%s\n", mvlab::experiment::schema().dump(2).c_str());
      return ok;
    }
  } catch (const mvlab::validation_error& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return validation;
  } catch (const mvlab::numerical_error& e) {
    std::fprintf(stderr, "numerical error: %s (at %g)\n", e.what(), e.where());
    return numerical;
  } catch (const mvlab::statistical_error& e) {
    std::fprintf(stderr, "statistical error: %s\n", e.what());
    return statistical;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return validation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return io_failure;
  }
  return ok;
}
