#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace slegff::report {

// One acceptance-criterion row of the consolidated report.
struct CriterionRow {
  std::string id;
  std::string description;
  std::string status;  // PASS / FAIL / SKIPPED
  nlohmann::json details;
};

// Scans run directories for run.json records and evaluates every known
// acceptance criterion against them; criteria without a covering run are
// SKIPPED.
std::vector<CriterionRow> consolidate(const std::vector<std::string>& run_dirs);

std::string render_text(const std::vector<CriterionRow>& rows);
nlohmann::json render_json(const std::vector<CriterionRow>& rows);

}  // namespace slegff::report
