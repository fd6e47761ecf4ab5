#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "stein/experiment.hpp"
#include "stein/selftest.hpp"

#ifndef STEIN_VERSION
#define STEIN_VERSION "unknown"
#endif

namespace {

constexpr int kOk = 0, kConfig = 2, kNumeric = 3, kSelftest = 4;

stein::json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) stein::config_error("cannot read '" + path + "'");
  try {
    return stein::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    stein::config_error("'" + path + "' is not valid JSON: " + e.what());
  }
}

// "-" means stdout
void emit(const std::string& path, const std::string& text) {
  if (path == "-" || path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) stein::config_error("cannot write '" + path + "'");
  f << text;
}

void report_checks(const stein::ExperimentResult& r) {
  for (const auto& s : r.check_failures) std::cerr << "FAIL bound-check " << s << "\n";
}

int cmd_run(const std::string& path) {
  auto res = stein::run_experiment(load_json(path));
  std::ostringstream os;
  if (res.format == "json") {
    os << stein::result_json(res, STEIN_VERSION).dump(2) << "\n";
  } else {
    os << stein::csv_header() << "\n";
    stein::write_rows_csv(os, res, STEIN_VERSION);
  }
  emit(res.output_path, os.str());
  report_checks(res);
  return kOk;
}

int cmd_sweep(const std::string& tmpl_path, const std::string& grid_path, const std::string& out) {
  auto tmpl = load_json(tmpl_path);
  auto grid = load_json(grid_path);
  auto sw = stein::run_sweep(tmpl, grid);
  std::ostringstream os;
  os << stein::csv_header() << "\n";
  for (const auto& r : sw.runs) stein::write_rows_csv(os, r, STEIN_VERSION);
  std::string dest = out;
  if (dest.empty() && tmpl.contains("output") && tmpl["output"].contains("path"))
    dest = tmpl["output"]["path"].get<std::string>();
  emit(dest.empty() ? "-" : dest, os.str());
  for (const auto& r : sw.runs) report_checks(r);
  return kOk;
}

int cmd_list(bool as_json) {
  auto cat = stein::coupling_catalogue();
  if (as_json) {
    stein::json j = stein::json::array();
    for (const auto& c : cat) j.push_back({{"name", c.name}, {"params", c.params}, {"description", c.description}});
    std::cout << j.dump(2) << "\n";
    return kOk;
  }
  for (const auto& c : cat) std::cout << c.name << "\t" << c.params << "\t" << c.description << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stein coupling experiments: error terms, bounds and distances to the normal law"};
  app.set_version_flag("--version", STEIN_VERSION);
  app.require_subcommand(1);
  unsigned workers = 0;
  app.add_option("--workers", workers, "worker threads (overrides STEIN_WORKERS)");

  std::string config_path;
  auto* run = app.add_subcommand("run", "run one experiment from a JSON config");
  run->add_option("config", config_path, "config file")->required();

  std::string tmpl_path, grid_path, sweep_out;
  auto* sweep = app.add_subcommand("sweep", "run a template over a parameter grid; long-format CSV");
  sweep->add_option("template", tmpl_path, "config template")->required();
  sweep->add_option("grid", grid_path, "grid: dotted keys to lists, optional _seeds")->required();
  sweep->add_option("-o,--output", sweep_out, "output path (default: template output.path or stdout)");

  bool list_json = false;
  auto* list = app.add_subcommand("list-couplings", "list the available couplings");
  list->add_flag("--json", list_json, "JSON output");

  stein::SelftestOptions so;
  auto* self = app.add_subcommand("selftest", "run the enumeration oracle suite");
  self->add_option("--seed", so.seed, "seed for the Monte Carlo lines");
  self->add_option("--chunk-size", so.chunk_size, "chunk size");
  self->add_option("--samples", so.mc_samples, "Monte Carlo samples per line");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  if (workers > 0) setenv("STEIN_WORKERS", std::to_string(workers).c_str(), 1);

  try {
    if (*run) return cmd_run(config_path);
    if (*sweep) return cmd_sweep(tmpl_path, grid_path, sweep_out);
    if (*list) return cmd_list(list_json);
    if (*self) return stein::run_selftest(std::cout, so) == 0 ? kOk : kSelftest;
  } catch (const stein::Error& e) {
    std::cerr << e.what() << "\n";
    switch (e.kind()) {
      case stein::ErrorKind::config:
      case stein::ErrorKind::invalid_parameter: return kConfig;
      default: return kNumeric;
    }
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  }
  return kOk;
}
