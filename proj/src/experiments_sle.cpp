// The four SLE-heavy experiments: whitney-stats, curve-mass, levelline-bound,
// flowline-square-scaling.

#include <algorithm>
#include <cmath>
#include <map>

#include "experiments_internal.hpp"
#include "slegff/core.hpp"
#include "slegff/dimension.hpp"
#include "slegff/field.hpp"
#include "slegff/loewner.hpp"
#include "slegff/stats.hpp"

namespace slegff::experiments::detail {

namespace {

using core::complex;

// Breadth-first CR-Whitney tiling of a slit half-plane region with batched
// point evolution (the generic oracle version evaluates one point at a time).
dimension::WhitneyDecomposition decompose_chain(
    std::span<const loewner::DrivingPath> segs, const core::Region& region,
    int max_level, double upper_constant) {
  dimension::WhitneyDecomposition w;
  w.region = region;
  w.max_level = max_level;
  w.upper_constant = upper_constant;
  std::vector<core::DyadicSquare> pending{{0, 0, 0}};
  while (!pending.empty()) {
    std::vector<complex> centers;
    centers.reserve(pending.size());
    for (const auto& s : pending) centers.push_back(s.center(region));
    auto batch = loewner::make_batch(centers);
    loewner::EvolveOptions eo;
    eo.freeze_tol = 1e-4;
    loewner::evolve_batch(batch, segs, eo);
    std::vector<core::DyadicSquare> next;
    for (std::size_t k = 0; k < pending.size(); ++k) {
      const auto& s = pending[k];
      double side = s.side(region);
      if (batch.swallowed(k)) {
        ++w.oracle_failures;
        if (s.level >= max_level) {
          ++w.discarded_at_max;
          w.discarded_area += side * side;
        } else {
          for (auto c : s.children()) next.push_back(c);
        }
        continue;
      }
      double cr = batch.cr(k);
      if (cr >= 4.0 * side) {
        w.squares.push_back(s);
        w.cr_center.push_back(cr);
        w.kept_area += side * side;
        if (cr > upper_constant * side) ++w.upper_violations;
      } else if (s.level >= max_level) {
        ++w.discarded_at_max;
        w.discarded_area += side * side;
      } else {
        for (auto c : s.children()) next.push_back(c);
      }
    }
    pending = std::move(next);
  }
  return w;
}

// Distance to the hull boundary: nearest traced tip or the real axis.
double trace_distance(complex z, const std::vector<complex>& tips) {
  double d = z.imag();
  for (auto t : tips) d = std::min(d, std::abs(z - t));
  return d;
}

std::vector<complex> subcell_centers(const core::Region& region,
                                     const core::DyadicSquare& s, int sub_log2) {
  std::vector<complex> out;
  double side = s.side(region);
  double sub = side * std::ldexp(1.0, -sub_log2);
  complex corner = s.corner(region);
  int n = 1 << sub_log2;
  out.reserve(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      out.push_back(corner + complex((i + 0.5) * sub, (j + 0.5) * sub));
  return out;
}

// Exact mean Liouville mass of one square from its sub-cell conformal radii:
// E[mu_delta(z)] = CR(z)^{g^2/2} delta^2. Swallowed sub-points carry their
// stopped CR (the component value at the cut time).
double square_mean_mass(std::span<const loewner::DrivingPath> segs,
                        const core::Region& region, const core::DyadicSquare& s,
                        int sub_log2, double gamma_sq_half) {
  auto subs = subcell_centers(region, s, sub_log2);
  double sub_side = s.side(region) * std::ldexp(1.0, -sub_log2);
  auto batch = loewner::make_batch(subs);
  loewner::EvolveOptions eo;
  eo.freeze_tol = 1e-3;
  loewner::evolve_batch(batch, segs, eo);
  double total = 0.0;
  for (std::size_t i = 0; i < subs.size(); ++i)
    total += std::pow(batch.cr(i), gamma_sq_half);
  return total * sub_side * sub_side;
}

// Covariance model over the sub-cells of one square for q-moment sampling.
// Sub-points within 4 delta of the hull (or swallowed) are excluded,
// mirroring the near-curve split of the mass bounds; counts are reported.
struct SquareModel {
  field::CovarianceModel model;
  std::size_t n_used = 0;
  std::size_t n_dropped = 0;
};

SquareModel square_model(std::span<const loewner::DrivingPath> segs,
                         const core::Region& region, const core::DyadicSquare& s,
                         int sub_log2) {
  auto subs = subcell_centers(region, s, sub_log2);
  double sub_side = s.side(region) * std::ldexp(1.0, -sub_log2);
  auto batch = loewner::make_batch(subs);
  loewner::EvolveOptions eo;
  eo.freeze_tol = 1e-3;
  eo.kernel_safe = true;
  loewner::evolve_batch(batch, segs, eo);
  SquareModel out;
  std::vector<complex> pts, mapped;
  std::vector<double> log_cr;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (batch.swallowed(i) || batch.cr(i) < 4.0 * sub_side) {
      ++out.n_dropped;
      continue;
    }
    pts.push_back(subs[i]);
    mapped.push_back({batch.g_re[i], batch.g_im[i]});
    log_cr.push_back(std::log(batch.cr(i)));
  }
  out.n_used = pts.size();
  if (out.n_used >= 2)
    out.model = field::make_slit_model_prepared(std::move(pts), std::move(mapped),
                                                std::move(log_cr), sub_side);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// whitney-stats (criterion 12, geometry part)
// ---------------------------------------------------------------------------

json exp_whitney_stats(const ExperimentConfig& cfg, const std::string& out_dir,
                       std::vector<std::string>& outputs) {
  const auto& p = cfg.params;
  double kap = p_num(p, "kappa", 2.0);
  int chains = static_cast<int>(p_int(p, "chains", 4));
  double dt = p_num(p, "dt", 2e-5);
  double t_max = p_num(p, "t_max", 0.5);
  int max_level = static_cast<int>(p_int(p, "max_level", 7));
  core::Region region{-0.5, 0.0, 1.0};
  auto g1 = core::GammaParams::make(1.0);
  (void)g1;

  std::string wpath = (fs::path(out_dir) / "whitney_squares.csv").string();
  Csv wcsv(wpath, "chain,level,i,j,cr_center");
  outputs.push_back(wpath);
  std::string opath = (fs::path(out_dir) / "whitney_stats.csv").string();
  Csv ocsv(opath, "chain,level,n_squares,osc_p99,green_dev_min,green_dev_max");
  outputs.push_back(opath);

  std::uint64_t total_violations = 0, koebe_violations = 0, total_squares = 0;
  double worst_osc_ratio = 0.0, worst_spread_diff = 0.0;
  bool have_ratio = false;

  for (int chain = 0; chain < chains; ++chain) {
    RandomStream rng(cfg.seed, 1200 + chain);
    auto driving = loewner::sample_driving(rng, kap, t_max, dt);
    std::span<const loewner::DrivingPath> segs{&driving, 1};
    auto w = decompose_chain(segs, region, max_level, 12.0);
    total_violations += w.upper_violations;
    total_squares += w.squares.size();
    for (std::size_t k = 0; k < w.squares.size(); ++k) {
      const auto& s = w.squares[k];
      wcsv.row({std::to_string(chain), std::to_string(s.level),
                std::to_string(s.i), std::to_string(s.j), g17(w.cr_center[k])});
    }

    // Koebe sandwich CR/4 <= d <= CR against a traced boundary sample.
    int stride = std::max(1, driving.n_steps() / 30000);
    auto tips = loewner::trace_tip(driving, stride);
    for (std::size_t k = 0; k < w.squares.size(); ++k) {
      complex c = w.squares[k].center(region);
      double d = trace_distance(c, tips);
      double cr = w.cr_center[k];
      if (!(cr <= 4.0 * d * 1.05 && d <= cr * 1.05)) ++koebe_violations;
    }

    // Winding oscillation over center + quarter points, one batch for all
    // squares of the chain.
    std::vector<complex> probes;
    probes.reserve(w.squares.size() * 5);
    for (const auto& s : w.squares) {
      complex c = s.center(region);
      double q = 0.25 * s.side(region);
      probes.push_back(c);
      probes.push_back(c + complex(q, q));
      probes.push_back(c + complex(-q, q));
      probes.push_back(c + complex(q, -q));
      probes.push_back(c + complex(-q, -q));
    }
    auto pb = loewner::make_batch(probes);
    loewner::EvolveOptions eo;
    eo.freeze_tol = 1e-4;
    loewner::evolve_batch(pb, segs, eo);
    std::map<int, std::vector<double>> osc_by_level;
    for (std::size_t k = 0; k < w.squares.size(); ++k) {
      double lo = 1e300, hi = -1e300;
      bool ok = true;
      for (int m = 0; m < 5; ++m) {
        if (pb.swallowed(5 * k + m)) {
          ok = false;
          break;
        }
        double v = pb.winding(5 * k + m);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (ok) osc_by_level[w.squares[k].level].push_back(hi - lo);
    }

    // Green's-function deviation in sampled squares: tildeG(x,y) + log(1/d(Q)).
    std::map<int, std::vector<std::size_t>> squares_by_level;
    for (std::size_t k = 0; k < w.squares.size(); ++k)
      squares_by_level[w.squares[k].level].push_back(k);
    std::vector<complex> pair_pts;
    std::vector<std::pair<int, double>> pair_meta;  // (level, log d(Q))
    RandomStream prng = rng.fork(17);
    for (auto& [level, idx] : squares_by_level) {
      int want = std::min<std::size_t>(8, idx.size());
      for (int m = 0; m < want; ++m) {
        std::size_t k = idx[static_cast<std::size_t>(prng.uniform() * idx.size())];
        const auto& s = w.squares[k];
        double side = s.side(region);
        complex corner = s.corner(region);
        double dq = trace_distance(s.center(region), tips);
        for (int pr = 0; pr < 4; ++pr) {
          pair_pts.push_back(corner + complex(prng.uniform() * side,
                                              prng.uniform() * side));
          pair_pts.push_back(corner + complex(prng.uniform() * side,
                                              prng.uniform() * side));
          pair_meta.push_back({level, std::log(dq)});
        }
      }
    }
    auto gb = loewner::make_batch(pair_pts);
    loewner::EvolveOptions geo;
    geo.freeze_tol = 1e-4;
    geo.kernel_safe = true;
    loewner::evolve_batch(gb, segs, geo);
    std::map<int, std::pair<double, double>> dev_by_level;  // min, max
    for (std::size_t m = 0; m < pair_meta.size(); ++m) {
      if (gb.swallowed(2 * m) || gb.swallowed(2 * m + 1)) continue;
      complex gx{gb.g_re[2 * m], gb.g_im[2 * m]};
      complex gy{gb.g_re[2 * m + 1], gb.g_im[2 * m + 1]};
      double r = std::abs(pair_pts[2 * m] - pair_pts[2 * m + 1]);
      if (r < 1e-12) continue;
      double tg = loewner::greens_slit(gx, gy) + std::log(r);
      double dev = tg - pair_meta[m].second;
      auto [it, fresh] = dev_by_level.try_emplace(pair_meta[m].first,
                                                  std::pair{dev, dev});
      if (!fresh) {
        it->second.first = std::min(it->second.first, dev);
        it->second.second = std::max(it->second.second, dev);
      }
    }

    // per-level rows + level-independence statistics
    std::vector<int> levels;
    std::vector<double> p99s, spreads;
    for (auto& [level, oscs] : osc_by_level) {
      std::sort(oscs.begin(), oscs.end());
      double p99 = oscs[static_cast<std::size_t>(0.99 * (oscs.size() - 1))];
      double dmin = 0.0, dmax = 0.0;
      if (auto it = dev_by_level.find(level); it != dev_by_level.end()) {
        dmin = it->second.first;
        dmax = it->second.second;
      }
      ocsv.row({std::to_string(chain), std::to_string(level),
                std::to_string(oscs.size()), g17(p99), g17(dmin), g17(dmax)});
      if (oscs.size() >= 20) {
        levels.push_back(level);
        p99s.push_back(p99);
        spreads.push_back(dmax - dmin);
      }
    }
    for (std::size_t a = 0; a + 1 < p99s.size(); ++a) {
      double ratio = p99s[a + 1] / std::max(p99s[a], 1e-12);
      worst_osc_ratio = std::max(worst_osc_ratio, ratio);
      have_ratio = true;
    }
    for (std::size_t a = 0; a + 2 < spreads.size(); ++a)
      worst_spread_diff =
          std::max(worst_spread_diff, std::abs(spreads[a + 2] - spreads[a]));
  }

  bool pass = total_violations == 0 && koebe_violations == 0 &&
              (!have_ratio || worst_osc_ratio < 1.5) && worst_spread_diff < 1.0;
  json summary;
  summary["total_squares"] = total_squares;
  summary["upper_violations"] = total_violations;
  summary["koebe_violations"] = koebe_violations;
  summary["worst_osc_p99_ratio"] = worst_osc_ratio;
  summary["worst_green_spread_diff"] = worst_spread_diff;
  summary["criteria"] = json::array(
      {criterion("C12.geometry",
                 "CR-Whitney inequalities and Koebe sandwich hold exactly; "
                 "oscillation and Green-deviation statistics level-independent",
                 pass,
                 {{"upper_violations", total_violations},
                  {"koebe_violations", koebe_violations},
                  {"worst_osc_p99_ratio", worst_osc_ratio},
                  {"worst_green_spread_diff", worst_spread_diff}})});
  return summary;
}

// ---------------------------------------------------------------------------
// curve-mass (criterion 12, Liouville mass of the curve vanishes)
// ---------------------------------------------------------------------------

json exp_curve_mass(const ExperimentConfig& cfg, const std::string& out_dir,
                    std::vector<std::string>& outputs) {
  const auto& p = cfg.params;
  auto kappas = p_vec(p, "kappas", {2.0, 4.0, 6.0});
  double gamma = p_num(p, "gamma", 1.0);
  int chains = static_cast<int>(p_int(p, "chains", 24));
  int level_lo = static_cast<int>(p_int(p, "level_lo", 3));
  int level_hi = static_cast<int>(p_int(p, "level_hi", 6));
  double dt = p_num(p, "dt", 2e-5);
  double t_max = p_num(p, "t_max", 0.5);
  int cells_per_level = static_cast<int>(p_int(p, "cells_per_level", 10));
  int sub_log2 = static_cast<int>(p_int(p, "sub_ratio_log2", 2));
  int fields_per_cell = static_cast<int>(p_int(p, "fields_per_cell", 2));
  auto g = core::GammaParams::make(gamma);
  core::Region region{-0.5, 0.0, 1.0};

  std::string path = (fs::path(out_dir) / "curve_mass.csv").string();
  Csv csv(path, "kappa,level,mean_hits,mean_cell_mass,total_mass_estimate");
  outputs.push_back(path);

  json per_kappa = json::array();
  bool all_decreasing = true;
  for (double kap : kappas) {
    int n_levels = level_hi - level_lo + 1;
    std::vector<Accumulator> hits(n_levels), cell_mass(n_levels);
    std::uint64_t dropped_subpoints = 0;
    for (int chain = 0; chain < chains; ++chain) {
      RandomStream rng(cfg.seed, 1400 + static_cast<int>(kap * 8) * 100 + chain);
      auto driving = loewner::sample_driving(rng, kap, t_max, dt);
      std::span<const loewner::DrivingPath> segs{&driving, 1};
      dimension::ScanOptions opt;
      opt.evolve.freeze_tol = 1e-3;
      auto scan = dimension::scan_chain_cells(driving, region, level_lo, level_hi,
                                              opt, nullptr);
      RandomStream pick = rng.fork(3);
      for (const auto& lc : scan.per_level) {
        int li = lc.level - level_lo;
        std::vector<core::DyadicSquare> curve_cells;
        if (kap <= 4.0) {
          curve_cells = lc.hit;
        } else {
          // boundary cells of the hull: mixed swallowed/alive probes, or an
          // alive center close to the curve
          std::vector<complex> probes;
          for (const auto& s : lc.hit) {
            complex c = s.center(region);
            double q = 0.25 * s.side(region);
            probes.push_back(c);
            probes.push_back(c + complex(q, q));
            probes.push_back(c + complex(-q, q));
            probes.push_back(c + complex(q, -q));
            probes.push_back(c + complex(-q, -q));
          }
          auto pb = loewner::make_batch(probes);
          loewner::evolve_batch(pb, segs, opt.evolve);
          for (std::size_t k = 0; k < lc.hit.size(); ++k) {
            int n_sw = 0;
            double min_cr = 1e300;
            for (int m = 0; m < 5; ++m) {
              if (pb.swallowed(5 * k + m)) {
                ++n_sw;
              } else {
                min_cr = std::min(min_cr, pb.cr(5 * k + m));
              }
            }
            double side = lc.hit[k].side(region);
            bool curve = (n_sw > 0 && n_sw < 5) ||
                         (n_sw == 0 && min_cr <= 0.5 * side);
            if (curve) curve_cells.push_back(lc.hit[k]);
          }
        }
        hits[li].add(static_cast<double>(curve_cells.size()));
        if (curve_cells.empty()) continue;

        int want = std::min<int>(cells_per_level, curve_cells.size());
        for (int m = 0; m < want; ++m) {
          const auto& cell =
              curve_cells[static_cast<std::size_t>(pick.uniform() * curve_cells.size())];
          cell_mass[li].add(
              square_mean_mass(segs, region, cell, sub_log2, g.gamma_sq_half));
        }
      }
    }
    std::vector<double> xs, ys;
    for (int li = 0; li < n_levels; ++li) {
      double total = hits[li].mean() * cell_mass[li].mean();
      csv.row({g17(kap), std::to_string(level_lo + li), g17(hits[li].mean()),
               g17(cell_mass[li].mean()), g17(total)});
      if (total > 0.0) {
        xs.push_back(level_lo + li);
        ys.push_back(std::log2(total));
      }
    }
    auto fit = fit_line(xs, ys);
    bool decreasing = fit.slope < 0.0;
    all_decreasing = all_decreasing && decreasing;
    per_kappa.push_back({{"kappa", kap},
                         {"decay_exponent", -fit.slope},
                         {"slope_se", fit.slope_stderr},
                         {"dropped_subpoints", dropped_subpoints},
                         {"decreasing", decreasing}});
  }

  json summary;
  summary["per_kappa"] = per_kappa;
  summary["criteria"] = json::array(
      {criterion("C12.curve_mass",
                 "Liouville mass over curve-hitting cells decreases in the level "
                 "with a positive fitted exponent",
                 all_decreasing, {{"per_kappa", per_kappa}})});
  return summary;
}

// ---------------------------------------------------------------------------
// levelline-bound (criterion 11)
// ---------------------------------------------------------------------------

json exp_levelline_bound(const ExperimentConfig& cfg, const std::string& out_dir,
                         std::vector<std::string>& outputs) {
  const auto& p = cfg.params;
  double gamma = p_num(p, "gamma", 1.0);
  int chains = static_cast<int>(p_int(p, "chains", 100));
  int level_lo = static_cast<int>(p_int(p, "level_lo", 3));
  int level_hi = static_cast<int>(p_int(p, "level_hi", 7));
  double dt = p_num(p, "dt", 1e-5);
  double t_max = p_num(p, "t_max", 0.4);
  int cells_per_level = static_cast<int>(p_int(p, "cells_per_level", 8));
  int sub_log2 = static_cast<int>(p_int(p, "sub_ratio_log2", 3));
  auto g = core::GammaParams::make(gamma);
  const double kap = 4.0;
  core::Region region{-0.5, 0.0, 1.0};

  int n_levels = level_hi - level_lo + 1;
  int n_shards = std::max(1, cfg.workers);
  auto ranges = split_range(chains, n_shards);
  std::vector<std::vector<Accumulator>> sh_hits(n_shards,
                                                std::vector<Accumulator>(n_levels));
  std::vector<std::vector<Accumulator>> sh_mass1(n_shards,
                                                 std::vector<Accumulator>(n_levels));
  parallel_shards(n_shards, cfg.workers, [&](int s) {
    for (std::uint64_t chain = ranges[s].first; chain < ranges[s].second; ++chain) {
      RandomStream rng(cfg.seed, 1600 + chain);
      auto driving = loewner::sample_driving(rng, kap, t_max, dt);
      std::span<const loewner::DrivingPath> segs{&driving, 1};
      dimension::ScanOptions opt;
      opt.evolve.freeze_tol = 1e-3;
      auto scan = dimension::scan_chain_cells(driving, region, level_lo, level_hi,
                                              opt, nullptr);
      RandomStream pick = rng.fork(5);
      for (const auto& lc : scan.per_level) {
        int li = lc.level - level_lo;
        sh_hits[s][li].add(static_cast<double>(lc.hit.size()));
        if (lc.hit.empty()) continue;
        int want = std::min<int>(cells_per_level, lc.hit.size());
        for (int m = 0; m < want; ++m) {
          const auto& cell =
              lc.hit[static_cast<std::size_t>(pick.uniform() * lc.hit.size())];
          sh_mass1[s][li].add(
              square_mean_mass(segs, region, cell, sub_log2, g.gamma_sq_half));
        }
      }
    }
  });
  std::vector<Accumulator> hits(n_levels), mass1(n_levels);
  for (int s = 0; s < n_shards; ++s)
    for (int li = 0; li < n_levels; ++li) {
      hits[li].merge(sh_hits[s][li]);
      mass1[li].merge(sh_mass1[s][li]);
    }

  std::string path = (fs::path(out_dir) / "levelline_mass.csv").string();
  Csv csv(path, "level,mean_hits,mean_mass,mass_se,n_samples");
  outputs.push_back(path);

  // single-square mass exponent: E[mu(S) | S hits the curve] ~ side^{exponent}
  std::vector<double> xs, ys, ses, xh, yh, seh;
  for (int li = 0; li < n_levels; ++li) {
    csv.row({std::to_string(level_lo + li), g17(hits[li].mean()),
             g17(mass1[li].mean()), g17(mass1[li].stderr_mean()),
             std::to_string(mass1[li].n)});
    double m = mass1[li].mean();
    if (m > 0.0) {
      xs.push_back(level_lo + li);
      ys.push_back(std::log2(m));
      ses.push_back(std::max(1e-9, mass1[li].stderr_mean() / m / std::log(2.0)));
    }
    double h = hits[li].mean();
    if (h > 0.0) {
      xh.push_back(level_lo + li);
      yh.push_back(std::log2(h));
      seh.push_back(std::max(1e-9, hits[li].stderr_mean() / h / std::log(2.0)));
    }
  }
  auto mass_fit = fit_line_weighted(xs, ys, ses);
  double mass_exponent = -mass_fit.slope;
  auto dim_fit = fit_line_weighted(xh, yh, seh);
  double box_dim = dim_fit.slope;

  // Jensen route, as in the mass-bound proof: E[mu^q] <= (E mu)^q, so the
  // content exponent theta(q) is at most box_dim - q * mass_exponent and the
  // fitted quantum dimension is bounded by their ratio.
  double q_star = box_dim / mass_exponent;

  double q_bound = 3.0 / (4.0 + gamma * gamma);
  double mass_target = 2.0 + g.gamma_sq_half;
  bool pass = mass_exponent >= mass_target - 0.1 && q_star <= q_bound + 0.05;

  json summary;
  summary["mass_exponent"] = mass_exponent;
  summary["mass_exponent_se"] = mass_fit.slope_stderr;
  summary["mass_exponent_target"] = mass_target;
  summary["box_dimension"] = box_dim;
  summary["q_star"] = q_star;
  summary["q_bound"] = q_bound;
  summary["criteria"] = json::array(
      {criterion("C11",
                 "level-line bound: single-square mass exponent >= 2 + g^2/2 - "
                 "0.1, implying fitted quantum dimension <= 3/(4+g^2) + 0.05",
                 pass,
                 {{"mass_exponent", mass_exponent},
                  {"box_dimension", box_dim},
                  {"q_star", q_star},
                  {"q_bound_plus_tol", q_bound + 0.05}})});
  return summary;
}

// ---------------------------------------------------------------------------
// flowline-square-scaling (criterion 10)
// ---------------------------------------------------------------------------

json exp_flowline_square_scaling(const ExperimentConfig& cfg,
                                 const std::string& out_dir,
                                 std::vector<std::string>& outputs) {
  const auto& p = cfg.params;
  double kap = p_num(p, "kappa", 2.0);
  double gamma = p_num(p, "gamma", 1.0);
  double q = p_num(p, "q", 0.5);
  int chains = static_cast<int>(p_int(p, "chains", 150));
  auto levels_d = p_vec(p, "levels", {5, 6, 7});
  double dt_fine = p_num(p, "dt_fine", 1e-5);
  double t_fine = p_num(p, "t_fine", 1.2);
  double dt_coarse = p_num(p, "dt_coarse", 4e-4);
  double t_max = p_num(p, "t_max", 6.0);
  int sub_log2 = static_cast<int>(p_int(p, "sub_ratio_log2", 2));
  int field_sq_per_level = static_cast<int>(p_int(p, "field_squares_per_level", 6));
  int fields_per_square = static_cast<int>(p_int(p, "fields_per_square", 2));
  int n_boot = static_cast<int>(p_int(p, "bootstrap", 400));

  auto g = core::GammaParams::make(gamma);
  auto k = core::KappaParams::make(kap);
  const double lam = -g.gamma * k.chi * q;  // winding weight exponent
  core::Region region{-0.5, 0.0, 1.0};
  std::vector<int> levels(levels_d.begin(), levels_d.end());
  int level_lo = *std::min_element(levels.begin(), levels.end());
  int level_hi = *std::max_element(levels.begin(), levels.end());

  // Per chain and level: (n_w, sum e^{lam w}) and (n_mu, sum mu^q).
  struct ChainLevel {
    double n_w = 0.0, sum_w = 0.0;
    double n_mu = 0.0, sum_mu = 0.0;
  };
  std::vector<std::vector<ChainLevel>> data(
      chains, std::vector<ChainLevel>(levels.size()));

  int n_shards = std::max(1, cfg.workers);
  auto ranges = split_range(chains, n_shards);
  parallel_shards(n_shards, cfg.workers, [&](int s) {
    for (std::uint64_t chain = ranges[s].first; chain < ranges[s].second; ++chain) {
      RandomStream rng(cfg.seed, 1800 + chain);
      auto segs =
          loewner::sample_tiered_driving(rng, kap, t_fine, dt_fine, t_max, dt_coarse);
      dimension::ScanOptions opt;
      opt.evolve.freeze_tol = 1e-3;
      RandomStream scan_rng = rng.fork(7);
      auto scan = dimension::scan_chain_cells(segs, region, level_lo, level_hi, opt,
                                              &scan_rng);
      RandomStream pick = rng.fork(9);
      for (const auto& lc : scan.per_level) {
        auto it = std::find(levels.begin(), levels.end(), lc.level);
        if (it == levels.end()) continue;
        std::size_t li = static_cast<std::size_t>(it - levels.begin());
        auto& slot = data[chain][li];
        for (double w : lc.whitney_winding) {
          slot.n_w += 1.0;
          slot.sum_w += std::exp(lam * w);
        }
        if (lc.whitney.empty()) continue;
        int want = std::min<int>(field_sq_per_level, lc.whitney.size());
        for (int m = 0; m < want; ++m) {
          const auto& cell =
              lc.whitney[static_cast<std::size_t>(pick.uniform() * lc.whitney.size())];
          auto sq = square_model(segs, region, cell, sub_log2);
          if (sq.n_used < 2) continue;
          double sub_side = cell.side(region) * std::ldexp(1.0, -sub_log2);
          RandomStream frng = pick.fork(4000 + m);
          double pre = std::pow(sub_side, g.gamma_sq_half) * sub_side * sub_side;
          for (int f = 0; f < fields_per_square; ++f) {
            auto h = sq.model.sample(frng);
            double mass = 0.0;
            for (double v : h) mass += pre * std::exp(g.gamma * v);
            slot.n_mu += 1.0;
            slot.sum_mu += std::pow(mass, q);
          }
        }
      }
    }
  });

  // combined statistic per level and its slope
  auto combined_exponent = [&](const std::vector<std::uint32_t>& chain_idx)
      -> double {
    std::vector<double> xs, ys;
    for (std::size_t li = 0; li < levels.size(); ++li) {
      double nw = 0, sw = 0, nm = 0, sm = 0;
      for (auto ci : chain_idx) {
        nw += data[ci][li].n_w;
        sw += data[ci][li].sum_w;
        nm += data[ci][li].n_mu;
        sm += data[ci][li].sum_mu;
      }
      if (nw < 1 || nm < 1) continue;
      double f = (sw / nw) * (sm / nm);
      xs.push_back(levels[li]);
      ys.push_back(std::log2(f));
    }
    if (xs.size() < 2) return 0.0;
    return -fit_line(xs, ys).slope;  // F ~ side^zeta = 2^{-n zeta}
  };

  std::vector<std::uint32_t> all_chains(chains);
  for (int i = 0; i < chains; ++i) all_chains[i] = i;
  double zeta_fit = combined_exponent(all_chains);
  RandomStream boot_rng(cfg.seed, 1999);
  auto ci = bootstrap_groups(boot_rng, chains, n_boot, 0.95, combined_exponent);

  double zeta_flow = core::flowline_forward(q, k, g);
  double zeta_kpz = core::kpz_forward(q, g);
  bool in_band = std::abs(zeta_fit - zeta_flow) < 0.20 * zeta_flow;
  bool distinguishable = !ci.contains(zeta_kpz);
  // also report the two factors separately
  std::string path = (fs::path(out_dir) / "flowline_scaling.csv").string();
  Csv csv(path, "level,n_whitney,winding_factor,n_mass,mass_factor,combined");
  outputs.push_back(path);
  for (std::size_t li = 0; li < levels.size(); ++li) {
    double nw = 0, sw = 0, nm = 0, sm = 0;
    for (int ci2 = 0; ci2 < chains; ++ci2) {
      nw += data[ci2][li].n_w;
      sw += data[ci2][li].sum_w;
      nm += data[ci2][li].n_mu;
      sm += data[ci2][li].sum_mu;
    }
    double a = nw > 0 ? sw / nw : 0.0, b = nm > 0 ? sm / nm : 0.0;
    csv.row({std::to_string(levels[li]), g17(nw), g17(a), g17(nm), g17(b),
             g17(a * b)});
  }

  json summary;
  summary["zeta_fit"] = zeta_fit;
  summary["zeta_ci"] = {ci.lo, ci.hi};
  summary["zeta_flowline"] = zeta_flow;
  summary["zeta_kpz"] = zeta_kpz;
  summary["in_band"] = in_band;
  summary["distinguishable_from_kpz"] = distinguishable;
  summary["criteria"] = json::array(
      {criterion("C10",
                 "flow-line square scaling: combined exponent within 20% of the "
                 "modified KPZ value and 95% CI excludes the unmodified one",
                 in_band && distinguishable,
                 {{"zeta_fit", zeta_fit},
                  {"ci", {ci.lo, ci.hi}},
                  {"zeta_flowline", zeta_flow},
                  {"zeta_kpz", zeta_kpz}})});
  return summary;
}

}  // namespace slegff::experiments::detail
