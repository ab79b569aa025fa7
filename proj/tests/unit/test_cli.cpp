#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "slegff/experiments.hpp"
#include "slegff/report.hpp"

using namespace slegff::experiments;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json small_kpz_config() {
  return json{{"experiment", "kpz-table"},
              {"seed", 11},
              {"workers", 1},
              {"params", {{"gamma", 1.0}, {"kappa_step", 0.5}}}};
}

}  // namespace

TEST_CASE("config round-trip is field-identical") {
  auto cfg = ExperimentConfig::parse(small_kpz_config());
  auto back = ExperimentConfig::parse(cfg.to_json());
  CHECK(cfg.canonical() == back.canonical());
  CHECK(cfg.config_hash() == back.config_hash());
  CHECK(cfg.experiment == "kpz-table");
  CHECK(cfg.seed == 11);
}

TEST_CASE("config validation rejects malformed input") {
  CHECK_THROWS_AS(ExperimentConfig::parse(json{{"experiment", "??"}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::parse(json::array()), std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::parse(
                      json{{"experiment", "kpz-table"}, {"workers", 0}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(ExperimentConfig::parse(json{{"experiment", "kpz-table"},
                                               {"schema_version", 9}}),
                  std::invalid_argument);
  // every advertised id parses
  for (const auto& id : experiment_ids()) {
    CHECK_NOTHROW(ExperimentConfig::parse(json{{"experiment", id}}));
  }
}

TEST_CASE("kpz-table run: outputs, summary fields, criteria entry") {
  auto cfg = ExperimentConfig::parse(small_kpz_config());
  std::string dir = "/tmp/slegff_cli_kpz";
  fs::remove_all(dir);
  auto rec = run_experiment(cfg, dir);
  CHECK(rec.experiment == "kpz-table");
  CHECK(fs::exists(fs::path(dir) / "kpz_table.csv"));
  CHECK(fs::exists(fs::path(dir) / "run.json"));
  CHECK(fs::exists(fs::path(dir) / "config.json"));
  CHECK(rec.summary["rowwise_deviation_sign"].get<bool>());
  CHECK(rec.summary["max_roundtrip_error"].get<double>() < 1e-12);
  REQUIRE(rec.summary.contains("criteria"));
  CHECK(rec.summary["criteria"][0]["id"] == "C13");
  CHECK(rec.summary["criteria"][0]["pass"].get<bool>());
}

TEST_CASE("identical config and seed reproduce byte-identical outputs") {
  auto cfg = ExperimentConfig::parse(small_kpz_config());
  std::string d1 = "/tmp/slegff_det_1", d2 = "/tmp/slegff_det_2";
  fs::remove_all(d1);
  fs::remove_all(d2);
  run_experiment(cfg, d1);
  run_experiment(cfg, d2);
  CHECK(slurp(d1 + "/kpz_table.csv") == slurp(d2 + "/kpz_table.csv"));

  // a Monte Carlo experiment, including the sharded path
  json mc{{"experiment", "winding-variance"},
          {"seed", 99},
          {"workers", 2},
          {"params",
           {{"kappas", {2.0}},
            {"T_values", {2.0, 3.0}},
            {"n_accepted", 400},
            {"m_nodes", 2000},
            {"cache_dir", "/tmp/slegff_cache_cli"}}}};
  auto mcfg = ExperimentConfig::parse(mc);
  std::string m1 = "/tmp/slegff_det_mc1", m2 = "/tmp/slegff_det_mc2";
  fs::remove_all(m1);
  fs::remove_all(m2);
  auto r1 = run_experiment(mcfg, m1);
  auto r2 = run_experiment(mcfg, m2);
  CHECK(slurp(m1 + "/winding_variance.csv") == slurp(m2 + "/winding_variance.csv"));
  CHECK(r1.summary["fits"].dump() == r2.summary["fits"].dump());
}

TEST_CASE("report: empty input yields SKIPPED rows; runs yield PASS rows") {
  auto rows = slegff::report::consolidate({"/tmp/slegff_definitely_missing"});
  REQUIRE(rows.size() >= 13);
  for (const auto& r : rows) CHECK(r.status == "SKIPPED");

  auto cfg = ExperimentConfig::parse(small_kpz_config());
  std::string dir = "/tmp/slegff_cli_report";
  fs::remove_all(dir);
  run_experiment(cfg, dir);
  auto rows2 = slegff::report::consolidate({dir});
  bool saw_pass = false;
  for (const auto& r : rows2) {
    if (r.id == "C13") {
      CHECK(r.status == "PASS");
      saw_pass = true;
    } else {
      CHECK(r.status == "SKIPPED");
    }
  }
  CHECK(saw_pass);
  auto text = slegff::report::render_text(rows2);
  CHECK(text.find("C13") != std::string::npos);
  CHECK(text.find("PASS") != std::string::npos);
  auto j = slegff::report::render_json(rows2);
  CHECK(j.size() == rows2.size());
}
