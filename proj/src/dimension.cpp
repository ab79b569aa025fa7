#include "slegff/dimension.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace slegff::dimension {

namespace {

std::uint64_t cell_key(const core::DyadicSquare& s) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(s.i)) << 32) |
         static_cast<std::uint32_t>(s.j);
}

}  // namespace

std::vector<core::DyadicSquare> hit_cells_from_points(const core::Region& region,
                                                      int level,
                                                      std::span<const complex> sample) {
  if (sample.empty()) return {};
  double side = region.size * std::ldexp(1.0, -level);
  for (std::size_t k = 1; k < sample.size(); ++k) {
    if (std::abs(sample[k] - sample[k - 1]) > side)
      throw std::runtime_error(
          "set sample is coarser than the finest covering level");
  }
  std::unordered_set<std::uint64_t> seen;
  std::vector<core::DyadicSquare> out;
  for (auto z : sample) {
    auto c = core::cell_of(region, z, level);
    if (seen.insert(cell_key(c)).second) out.push_back(c);
  }
  return out;
}

CoverReport cover_report(const core::Region& region, int level,
                         std::span<const core::DyadicSquare> hit,
                         const field::MeasureGrid* masses,
                         std::span<const double> q_list,
                         std::span<const double> exponent_list) {
  CoverReport r;
  r.level = level;
  r.hit_count = hit.size();
  r.q_list.assign(q_list.begin(), q_list.end());
  r.exponent_list.assign(exponent_list.begin(), exponent_list.end());
  double side = region.size * std::ldexp(1.0, -level);
  r.euclidean_content.reserve(exponent_list.size());
  for (double e : exponent_list)
    r.euclidean_content.push_back(static_cast<double>(r.hit_count) *
                                  std::pow(side, e));
  if (masses) {
    std::unordered_map<std::uint64_t, double> lut;
    lut.reserve(masses->cells.size());
    for (std::size_t k = 0; k < masses->cells.size(); ++k)
      lut[cell_key(masses->cells[k])] = masses->mass[k];
    r.quantum_content.assign(q_list.size(), 0.0);
    for (const auto& c : hit) {
      auto it = lut.find(cell_key(c));
      if (it == lut.end())
        throw std::runtime_error("no Liouville mass supplied for a hit cell");
      for (std::size_t qi = 0; qi < q_list.size(); ++qi)
        r.quantum_content[qi] += std::pow(it->second, q_list[qi]);
    }
  }
  return r;
}

ContentTable::ContentTable(std::vector<int> levels, std::vector<double> q_list)
    : levels_(std::move(levels)), q_list_(std::move(q_list)) {
  acc_.assign(levels_.size(), std::vector<Accumulator>(q_list_.size()));
}

void ContentTable::add(const CoverReport& report) {
  auto it = std::find(levels_.begin(), levels_.end(), report.level);
  if (it == levels_.end()) throw std::invalid_argument("level not in table");
  std::size_t li = static_cast<std::size_t>(it - levels_.begin());
  if (report.quantum_content.size() != q_list_.size())
    throw std::invalid_argument("q grid mismatch");
  for (std::size_t qi = 0; qi < q_list_.size(); ++qi)
    acc_[li][qi].add(report.quantum_content[qi]);
}

void ContentTable::add_euclidean(const CoverReport& report) {
  auto it = std::find(levels_.begin(), levels_.end(), report.level);
  if (it == levels_.end()) throw std::invalid_argument("level not in table");
  std::size_t li = static_cast<std::size_t>(it - levels_.begin());
  if (exponents_.empty()) {
    exponents_ = report.exponent_list;
    acc_e_.assign(levels_.size(), std::vector<Accumulator>(exponents_.size()));
  }
  for (std::size_t ei = 0; ei < exponents_.size(); ++ei)
    acc_e_[li][ei].add(report.euclidean_content[ei]);
}

double ContentTable::mean(std::size_t level_index, std::size_t q_index) const {
  return acc_[level_index][q_index].mean();
}

double ContentTable::stderr_mean(std::size_t level_index, std::size_t q_index) const {
  return acc_[level_index][q_index].stderr_mean();
}

std::uint64_t ContentTable::count(std::size_t level_index, std::size_t q_index) const {
  return acc_[level_index][q_index].n;
}

LineFit ContentTable::fit_of(const std::vector<std::vector<Accumulator>>& a,
                             std::size_t idx) const {
  std::vector<double> x, y, se;
  for (std::size_t li = 0; li < levels_.size(); ++li) {
    double m = a[li][idx].mean();
    if (!(m > 0.0)) continue;
    x.push_back(static_cast<double>(levels_[li]));
    y.push_back(std::log2(m));
    double s = a[li][idx].stderr_mean();
    se.push_back(std::max(1e-9, s / m / std::log(2.0)));
  }
  if (x.size() < 2) throw std::runtime_error("not enough levels with data to fit");
  return fit_line_weighted(x, y, se);
}

LineFit ContentTable::fit(std::size_t q_index) const { return fit_of(acc_, q_index); }

LineFit ContentTable::fit_euclidean(std::size_t exponent_index) const {
  return fit_of(acc_e_, exponent_index);
}

double ContentTable::dimension_estimate() const {
  std::vector<double> theta(q_list_.size()), theta_se(q_list_.size());
  for (std::size_t qi = 0; qi < q_list_.size(); ++qi) {
    LineFit f = fit(qi);
    theta[qi] = f.slope;
    theta_se[qi] = f.slope_stderr;
  }
  for (std::size_t qi = 1; qi < theta.size(); ++qi) {
    double slack = 2.0 * (theta_se[qi] + theta_se[qi - 1]);
    if (theta[qi] > theta[qi - 1] + slack)
      throw std::runtime_error("theta(q) not decreasing beyond noise");
  }
  if (theta.front() <= 0.0) return q_list_.front();
  if (theta.back() >= 0.0) return q_list_.back();
  for (std::size_t qi = 1; qi < theta.size(); ++qi) {
    if (theta[qi] <= 0.0) {
      double t0 = theta[qi - 1], t1 = theta[qi];
      double f = t0 / (t0 - t1);
      return q_list_[qi - 1] + f * (q_list_[qi] - q_list_[qi - 1]);
    }
  }
  return q_list_.back();
}

WhitneyDecomposition cr_whitney_decompose(const CrOracle& oracle,
                                          const core::Region& region, int max_level,
                                          double upper_constant) {
  WhitneyDecomposition w;
  w.region = region;
  w.max_level = max_level;
  w.upper_constant = upper_constant;
  std::vector<core::DyadicSquare> stack{{0, 0, 0}};
  while (!stack.empty()) {
    core::DyadicSquare s = stack.back();
    stack.pop_back();
    double side = s.side(region);
    auto cr = oracle(s.center(region));
    if (!cr) {
      ++w.oracle_failures;
      if (s.level >= max_level) {
        ++w.discarded_at_max;
        w.discarded_area += side * side;
        continue;
      }
      for (auto c : s.children()) stack.push_back(c);
      continue;
    }
    if (*cr >= 4.0 * side) {
      w.squares.push_back(s);
      w.cr_center.push_back(*cr);
      w.kept_area += side * side;
      if (*cr > upper_constant * side) ++w.upper_violations;
      continue;
    }
    if (s.level >= max_level) {
      ++w.discarded_at_max;
      w.discarded_area += side * side;
      continue;
    }
    for (auto c : s.children()) stack.push_back(c);
  }
  return w;
}

bool is_cr_whitney(const core::Region& region, const core::DyadicSquare& s,
                   double cr_center, double upper_constant) {
  double side = s.side(region);
  return cr_center >= 4.0 * side && cr_center <= upper_constant * side;
}

DeviationStats whitney_green_check(
    const WhitneyDecomposition& w,
    const std::function<double(complex, complex)>& tilde_g,
    const std::function<double(complex)>& boundary_distance, RandomStream& rng,
    int pairs_per_square) {
  std::unordered_map<int, std::size_t> level_idx;
  DeviationStats out;
  for (std::size_t k = 0; k < w.squares.size(); ++k) {
    const auto& s = w.squares[k];
    auto [it, inserted] = level_idx.try_emplace(s.level, out.levels.size());
    if (inserted) {
      out.levels.push_back(s.level);
      out.dev_min.push_back(1e300);
      out.dev_max.push_back(-1e300);
      out.n_pairs.push_back(0);
    }
    std::size_t li = it->second;
    double side = s.side(w.region);
    complex corner = s.corner(w.region);
    double d_q = boundary_distance(s.center(w.region));
    if (!(d_q > 0.0)) continue;
    for (int p = 0; p < pairs_per_square; ++p) {
      complex x = corner + complex(rng.uniform() * side, rng.uniform() * side);
      complex y = corner + complex(rng.uniform() * side, rng.uniform() * side);
      double dev = tilde_g(x, y) - std::log(d_q);
      out.dev_min[li] = std::min(out.dev_min[li], dev);
      out.dev_max[li] = std::max(out.dev_max[li], dev);
      ++out.n_pairs[li];
    }
  }
  return out;
}

OscillationStats whitney_winding_check(
    const WhitneyDecomposition& w,
    const std::function<std::optional<double>(complex)>& winding_at) {
  std::unordered_map<int, std::vector<double>> osc_by_level;
  OscillationStats out;
  for (std::size_t k = 0; k < w.squares.size(); ++k) {
    const auto& s = w.squares[k];
    double side = s.side(w.region);
    complex c = s.center(w.region);
    complex probes[5] = {c, c + complex(0.25 * side, 0.25 * side),
                         c + complex(-0.25 * side, 0.25 * side),
                         c + complex(0.25 * side, -0.25 * side),
                         c + complex(-0.25 * side, -0.25 * side)};
    double lo = 1e300, hi = -1e300;
    bool ok = true;
    for (auto z : probes) {
      auto v = winding_at(z);
      if (!v) {
        ok = false;
        break;
      }
      lo = std::min(lo, *v);
      hi = std::max(hi, *v);
    }
    if (!ok) {
      ++out.skipped;
      continue;
    }
    osc_by_level[s.level].push_back(hi - lo);
  }
  for (auto& [level, oscs] : osc_by_level) {
    std::sort(oscs.begin(), oscs.end());
    std::size_t idx = static_cast<std::size_t>(0.99 * (oscs.size() - 1));
    out.levels.push_back(level);
    out.p99.push_back(oscs[idx]);
    out.n_squares.push_back(oscs.size());
  }
  return out;
}

CellScan scan_chain_cells(const loewner::DrivingPath& driving,
                          const core::Region& region, int level_lo, int level_hi,
                          const ScanOptions& opt, RandomStream* subsample_rng) {
  return scan_chain_cells(std::span<const loewner::DrivingPath>{&driving, 1}, region,
                          level_lo, level_hi, opt, subsample_rng);
}

CellScan scan_chain_cells(std::span<const loewner::DrivingPath> segments,
                          const core::Region& region, int level_lo, int level_hi,
                          const ScanOptions& opt, RandomStream* subsample_rng) {
  CellScan scan;
  scan.region = region;

  std::vector<core::DyadicSquare> current;
  {
    std::int64_t n = std::int64_t{1} << level_lo;
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < n; ++j) current.push_back({level_lo, i, j});
  }
  double inclusion = 1.0;

  for (int level = level_lo; level <= level_hi; ++level) {
    LevelCells lc;
    lc.level = level;
    lc.inclusion_prob = inclusion;
    lc.n_cells_region = std::uint64_t{1} << (2 * level);
    double side = region.size * std::ldexp(1.0, -level);

    std::vector<complex> centers;
    centers.reserve(current.size());
    for (const auto& s : current) centers.push_back(s.center(region));
    auto batch = loewner::make_batch(centers);
    loewner::evolve_batch(batch, segments, opt.evolve);

    std::vector<core::DyadicSquare> next;
    for (std::size_t k = 0; k < current.size(); ++k) {
      bool swallowed = batch.swallowed(k);
      double cr = batch.cr(k);
      if (swallowed) {
        ++lc.swallowed;
        lc.hit.push_back(current[k]);
      } else {
        if (cr <= opt.hit_factor * side) lc.hit.push_back(current[k]);
        if (cr >= 4.0 * side && cr <= opt.whitney_upper * side) {
          lc.whitney.push_back(current[k]);
          lc.whitney_cr.push_back(cr);
          lc.whitney_winding.push_back(batch.winding(k));
        }
      }
      if (level < level_hi && (swallowed || cr <= opt.refine_factor * side)) {
        for (auto c : current[k].children()) next.push_back(c);
      }
    }
    scan.per_level.push_back(std::move(lc));

    if (level < level_hi) {
      double frac = 1.0;
      std::size_t di = static_cast<std::size_t>(level - level_lo);
      if (di < opt.descend_fraction.size()) frac = opt.descend_fraction[di];
      if (frac < 1.0) {
        if (!subsample_rng)
          throw std::invalid_argument("descend_fraction < 1 needs an rng");
        // Subsample whole sibling groups so inclusion stays uniform.
        std::vector<core::DyadicSquare> kept;
        for (std::size_t k = 0; k < next.size(); k += 4) {
          if (subsample_rng->uniform() < frac)
            for (std::size_t j = k; j < std::min(k + 4, next.size()); ++j)
              kept.push_back(next[j]);
        }
        next = std::move(kept);
        inclusion *= frac;
      }
    }
    current = std::move(next);
    if (current.empty()) break;
  }
  return scan;
}

void export_whitney_csv(const std::string& path, const WhitneyDecomposition& w) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("export_whitney_csv: cannot open " + path);
  f << "level,i,j,cr_center\n";
  char buf[128];
  for (std::size_t k = 0; k < w.squares.size(); ++k) {
    const auto& s = w.squares[k];
    std::snprintf(buf, sizeof buf, "%d,%lld,%lld,%.17g\n", s.level,
                  static_cast<long long>(s.i), static_cast<long long>(s.j),
                  w.cr_center[k]);
    f << buf;
  }
}

void export_contents_csv(const std::string& path, const ContentTable& table) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("export_contents_csv: cannot open " + path);
  f << "level,q,mean_content,stderr,n_samples\n";
  char buf[160];
  for (std::size_t li = 0; li < table.levels().size(); ++li) {
    for (std::size_t qi = 0; qi < table.q_list().size(); ++qi) {
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%llu\n",
                    table.levels()[li], table.q_list()[qi], table.mean(li, qi),
                    table.stderr_mean(li, qi),
                    static_cast<unsigned long long>(table.count(li, qi)));
      f << buf;
    }
  }
}

}  // namespace slegff::dimension
