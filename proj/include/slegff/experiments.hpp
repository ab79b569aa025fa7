#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace slegff::experiments {

// Parsed and validated run configuration. `params` keeps the per-experiment
// fields; common fields are lifted.
struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  int workers = 1;
  int schema_version = 1;
  nlohmann::json params;

  static ExperimentConfig parse(const nlohmann::json& j);
  nlohmann::json to_json() const;
  std::string canonical() const;   // stable serialized form
  std::uint64_t config_hash() const;
};

struct RunRecord {
  std::string experiment;
  std::uint64_t config_hash = 0;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;  // file paths written
  nlohmann::json summary;

  nlohmann::json to_json() const;
};

// Known experiment ids.
const std::vector<std::string>& experiment_ids();

// Execute the experiment, writing CSV outputs and a summary JSON into
// out_dir; returns the record (also written as run.json).
RunRecord run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

// Exit codes for the CLI wrapper.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

}  // namespace slegff::experiments
