#include "slegff/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace slegff::report {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Found {
  std::string finished_at;
  json entry;
};

// The acceptance list; C12 is split into the parts produced by the
// whitney-stats and curve-mass experiments.
const std::vector<std::pair<std::string, std::string>>& criterion_index() {
  static const std::vector<std::pair<std::string, std::string>> idx = {
      {"C1", "spectral ground truth (lambda_0, phi_0)"},
      {"C2", "kappa = 4 full spectrum"},
      {"C3", "survival-law consistency (MC vs series)"},
      {"C4", "winding variance slope"},
      {"C5", "winding exponential moments"},
      {"C6", "Loewner/diffusion equivalence (KS)"},
      {"C7", "Liouville mean and ball scaling"},
      {"C8", "deterministic-set KPZ (segment)"},
      {"C9", "SLE Euclidean dimension"},
      {"C10", "flow-line square scaling"},
      {"C11", "level-line bound direction"},
      {"C12.geometry", "geometry suite (CR-Whitney, Koebe, oscillation, Green)"},
      {"C12.curve_mass", "geometry suite (curve mass vanishing)"},
      {"C13", "calculator table"},
  };
  return idx;
}

}  // namespace

std::vector<CriterionRow> consolidate(const std::vector<std::string>& run_dirs) {
  std::map<std::string, Found> latest;
  for (const auto& dir : run_dirs) {
    std::error_code ec;
    for (auto it = fs::recursive_directory_iterator(dir, ec);
         it != fs::recursive_directory_iterator(); it.increment(ec)) {
      if (ec) break;
      if (!it->is_regular_file() || it->path().filename() != "run.json") continue;
      std::ifstream f(it->path());
      json run;
      try {
        f >> run;
      } catch (...) {
        continue;
      }
      if (!run.contains("summary") || !run["summary"].contains("criteria")) continue;
      std::string finished = run.value("finished_at", "");
      for (const auto& entry : run["summary"]["criteria"]) {
        std::string id = entry.value("id", "");
        if (id.empty()) continue;
        auto found = latest.find(id);
        if (found == latest.end() || finished > found->second.finished_at)
          latest[id] = {finished, entry};
      }
    }
  }
  std::vector<CriterionRow> rows;
  for (const auto& [id, what] : criterion_index()) {
    CriterionRow row;
    row.id = id;
    row.description = what;
    auto found = latest.find(id);
    if (found == latest.end()) {
      row.status = "SKIPPED";
    } else {
      row.status = found->second.entry.value("pass", false) ? "PASS" : "FAIL";
      row.details = found->second.entry.value("details", json::object());
      if (found->second.entry.contains("description"))
        row.description = found->second.entry["description"].get<std::string>();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string render_text(const std::vector<CriterionRow>& rows) {
  std::ostringstream out;
  out << "criterion        status   description\n";
  out << "---------        ------   -----------\n";
  for (const auto& r : rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-16s %-8s %s\n", r.id.c_str(),
                  r.status.c_str(), r.description.c_str());
    out << line;
    if (!r.details.is_null() && !r.details.empty())
      out << "                          " << r.details.dump() << "\n";
  }
  return out.str();
}

nlohmann::json render_json(const std::vector<CriterionRow>& rows) {
  json j = json::array();
  for (const auto& r : rows) {
    j.push_back({{"id", r.id},
                 {"status", r.status},
                 {"description", r.description},
                 {"details", r.details}});
  }
  return j;
}

}  // namespace slegff::report
