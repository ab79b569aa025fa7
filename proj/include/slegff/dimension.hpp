#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "slegff/core.hpp"
#include "slegff/field.hpp"
#include "slegff/loewner.hpp"
#include "slegff/stats.hpp"

namespace slegff::dimension {

using core::complex;

// Dyadic contents of one covering at one level: Euclidean contents
// hit_count * 2^{-n d'} for each exponent d', quantum contents
// sum over hit cells of mass^q for each q.
struct CoverReport {
  int level = 0;
  std::uint64_t hit_count = 0;
  std::vector<double> q_list;
  std::vector<double> quantum_content;
  std::vector<double> exponent_list;
  std::vector<double> euclidean_content;
};

// Cells hit by a point sample of a set (consecutive sample points must be
// closer than the finest cell side, else a resolution error is thrown).
std::vector<core::DyadicSquare> hit_cells_from_points(const core::Region& region,
                                                      int level,
                                                      std::span<const complex> sample);

CoverReport cover_report(const core::Region& region, int level,
                         std::span<const core::DyadicSquare> hit,
                         const field::MeasureGrid* masses,
                         std::span<const double> q_list,
                         std::span<const double> exponent_list);

// Mean contents across independent samples, per level; expectation is taken
// before the log, matching the expected-Minkowski definition.
class ContentTable {
 public:
  ContentTable(std::vector<int> levels, std::vector<double> q_list);
  void add(const CoverReport& report);  // quantum contents
  void add_euclidean(const CoverReport& report);

  const std::vector<int>& levels() const { return levels_; }
  const std::vector<double>& q_list() const { return q_list_; }

  // slope of log2(mean content) against level, with propagated stderr
  LineFit fit(std::size_t q_index) const;
  LineFit fit_euclidean(std::size_t exponent_index) const;
  double mean(std::size_t level_index, std::size_t q_index) const;
  double stderr_mean(std::size_t level_index, std::size_t q_index) const;
  std::uint64_t count(std::size_t level_index, std::size_t q_index) const;

  // root of theta(q) = 0 by bisection on the interpolated slope profile;
  // throws a fit-quality error if theta is not decreasing beyond noise.
  double dimension_estimate() const;

 private:
  std::vector<int> levels_;
  std::vector<double> q_list_;
  std::vector<std::vector<Accumulator>> acc_;    // [level][q]
  std::vector<std::vector<Accumulator>> acc_e_;  // [level][exponent]
  std::vector<double> exponents_;
  LineFit fit_of(const std::vector<std::vector<Accumulator>>& a,
                 std::size_t idx) const;
};

// Conformal-radius oracle: CR of a point in the current domain, nullopt when
// the point is swallowed (or otherwise unavailable).
using CrOracle = std::function<std::optional<double>(complex)>;

struct WhitneyDecomposition {
  core::Region region;
  int max_level = 0;
  double upper_constant = 12.0;
  std::vector<core::DyadicSquare> squares;
  std::vector<double> cr_center;
  std::uint64_t discarded_at_max = 0;
  std::uint64_t oracle_failures = 0;
  std::uint64_t upper_violations = 0;  // kept squares failing CR <= upper * side
  double kept_area = 0.0;
  double discarded_area = 0.0;
};

// Greedy maximal dyadic squares with 4 l(Q) <= CR(center); children of failed
// squares are recursed into, down to max_level.
WhitneyDecomposition cr_whitney_decompose(const CrOracle& oracle,
                                          const core::Region& region, int max_level,
                                          double upper_constant = 12.0);

// Is this square a CR-Whitney square (the membership predicate alone, no
// tiling involved)?
bool is_cr_whitney(const core::Region& region, const core::DyadicSquare& s,
                   double cr_center, double upper_constant = 12.0);

// Green's-function deviation tildeG(x,y) + log(1/d(Q)) over sampled pairs in
// each square, grouped by level; the lemma says it stays in a level-free band.
struct DeviationStats {
  std::vector<int> levels;
  std::vector<double> dev_min;
  std::vector<double> dev_max;
  std::vector<std::uint64_t> n_pairs;
  double spread(std::size_t i) const { return dev_max[i] - dev_min[i]; }
};

DeviationStats whitney_green_check(
    const WhitneyDecomposition& w,
    const std::function<double(complex, complex)>& tilde_g,
    const std::function<double(complex)>& boundary_distance, RandomStream& rng,
    int pairs_per_square);

// Winding oscillation (max - min over center + quarter points) per square;
// per-level 99th percentiles plus the skip count from swallowed samples.
struct OscillationStats {
  std::vector<int> levels;
  std::vector<double> p99;
  std::vector<std::uint64_t> n_squares;
  std::uint64_t skipped = 0;
};

OscillationStats whitney_winding_check(
    const WhitneyDecomposition& w,
    const std::function<std::optional<double>(complex)>& winding_at);

// Adaptive multi-level cell scan of one SLE chain. A cell is refined when its
// center's CR is at most refine_factor * side (CR is 4-Lipschitz, so children
// of other cells cannot be hits or Whitney squares), hit when CR <=
// hit_factor * side or the center is swallowed, Whitney when
// 4 side <= CR <= whitney_upper * side.
struct ScanOptions {
  double hit_factor = 0.5;
  double refine_factor = 64.0;
  double whitney_upper = 12.0;
  // per-level probability of descending into each refinable cell (subsampling
  // for deep scans); inclusion probabilities are tracked per level.
  std::vector<double> descend_fraction;
  loewner::EvolveOptions evolve;
};

struct LevelCells {
  int level = 0;
  double inclusion_prob = 1.0;  // product of descend fractions above
  std::uint64_t n_cells_region = 0;
  std::vector<core::DyadicSquare> hit;
  std::vector<core::DyadicSquare> whitney;
  std::vector<double> whitney_cr;
  std::vector<double> whitney_winding;
  std::uint64_t swallowed = 0;
};

struct CellScan {
  core::Region region;
  std::vector<LevelCells> per_level;
};

CellScan scan_chain_cells(const loewner::DrivingPath& driving,
                          const core::Region& region, int level_lo, int level_hi,
                          const ScanOptions& opt, RandomStream* subsample_rng);
CellScan scan_chain_cells(std::span<const loewner::DrivingPath> segments,
                          const core::Region& region, int level_lo, int level_hi,
                          const ScanOptions& opt, RandomStream* subsample_rng);

// CSV exports (level, i, j, CR) and content tables.
void export_whitney_csv(const std::string& path, const WhitneyDecomposition& w);
void export_contents_csv(const std::string& path, const ContentTable& table);

}  // namespace slegff::dimension
