// Experiment runner for the SLE / GFF / Liouville-measure toolkit.
//
//   slegff run <config.json> [--seed N] [--workers K] [--out DIR]
//   slegff report DIR...
//
// Exit codes: 0 success, 2 configuration/validation error, 3 runtime error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "slegff/experiments.hpp"
#include "slegff/report.hpp"

namespace fs = std::filesystem;
using slegff::experiments::ExperimentConfig;

int main(int argc, char** argv) {
  CLI::App app{"chordal SLE / GFF / Liouville measure experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  int workers = 0;
  bool seed_set = false, workers_set = false;
  auto* run = app.add_subcommand("run", "execute one experiment from a JSON config");
  run->add_option("config", config_path, "config JSON path")->required();
  run->add_option("--seed", seed, "override the config seed")
      ->each([&](const std::string&) { seed_set = true; });
  run->add_option("--workers", workers, "override the worker count")
      ->each([&](const std::string&) { workers_set = true; });
  run->add_option("--out", out_dir, "output directory");

  std::vector<std::string> report_dirs;
  std::string report_out;
  auto* rep = app.add_subcommand("report", "consolidate run directories");
  rep->add_option("dirs", report_dirs, "run directories")->required();
  rep->add_option("--out", report_out, "directory for report.json / report.txt");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      std::ifstream f(config_path);
      if (!f) {
        std::cerr << "cannot open config: " << config_path << "\n";
        return slegff::experiments::kExitValidation;
      }
      nlohmann::json j;
      try {
        f >> j;
      } catch (const std::exception& e) {
        std::cerr << "config parse error: " << e.what() << "\n";
        return slegff::experiments::kExitValidation;
      }
      ExperimentConfig cfg;
      try {
        cfg = ExperimentConfig::parse(j);
        if (seed_set) cfg.seed = seed;
        if (workers_set) cfg.workers = workers;
      } catch (const std::exception& e) {
        std::cerr << "config validation error: " << e.what() << "\n";
        return slegff::experiments::kExitValidation;
      }
      if (out_dir.empty()) {
        const char* env = std::getenv("SLEGFF_OUT");
        std::string base = env ? env : "runs";
        char sub[64];
        std::snprintf(sub, sizeof sub, "%s-%016llx", cfg.experiment.c_str(),
                      static_cast<unsigned long long>(cfg.config_hash()));
        out_dir = (fs::path(base) / sub).string();
      }
      try {
        auto rec = slegff::experiments::run_experiment(cfg, out_dir);
        std::cout << "wrote " << out_dir << "\n";
        std::cout << rec.summary.dump(2) << "\n";
      } catch (const std::invalid_argument& e) {
        std::cerr << "parameter validation error: " << e.what() << "\n";
        return slegff::experiments::kExitValidation;
      } catch (const std::domain_error& e) {
        std::cerr << "parameter validation error: " << e.what() << "\n";
        return slegff::experiments::kExitValidation;
      } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return slegff::experiments::kExitRuntime;
      }
      return slegff::experiments::kExitOk;
    }

    if (rep->parsed()) {
      auto rows = slegff::report::consolidate(report_dirs);
      std::string text = slegff::report::render_text(rows);
      std::cout << text;
      if (!report_out.empty()) {
        fs::create_directories(report_out);
        std::ofstream jf((fs::path(report_out) / "report.json").string());
        jf << slegff::report::render_json(rows).dump(2) << "\n";
        std::ofstream tf((fs::path(report_out) / "report.txt").string());
        tf << text;
      }
      return slegff::experiments::kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return slegff::experiments::kExitRuntime;
  }
  return slegff::experiments::kExitOk;
}
