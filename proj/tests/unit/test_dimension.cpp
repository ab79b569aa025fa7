#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "slegff/core.hpp"
#include "slegff/dimension.hpp"
#include "slegff/field.hpp"
#include "slegff/loewner.hpp"
#include "slegff/stats.hpp"

using namespace slegff;
using namespace slegff::dimension;
using core::complex;

namespace {

std::vector<complex> segment_sample(complex a, complex b, double step) {
  std::vector<complex> out;
  double len = std::abs(b - a);
  int n = static_cast<int>(len / step) + 2;
  for (int i = 0; i <= n; ++i)
    out.push_back(a + (b - a) * (static_cast<double>(i) / n));
  return out;
}

}  // namespace

TEST_CASE("segment covering: counts, q = 0 content, euclidean dimension 1") {
  core::Region region{-1.0, -1.0, 2.0};
  complex a{-0.5, 0.0131}, b{0.5, 0.0131};
  std::vector<double> qs{0.0, 0.5};
  std::vector<double> exps{0.8, 1.0, 1.2};
  ContentTable table({5, 6, 7, 8, 9}, qs);
  for (int level : {5, 6, 7, 8, 9}) {
    double side = region.size * std::ldexp(1.0, -level);
    auto sample = segment_sample(a, b, side * 0.3);
    auto hit = hit_cells_from_points(region, level, sample);
    // a horizontal segment of unit length crosses ~ 1/side cells
    double expect = 1.0 / side;
    CHECK(std::abs(static_cast<double>(hit.size()) - expect) <= 2.0);
    auto rep = cover_report(region, level, hit, nullptr, qs, exps);
    CHECK(rep.hit_count == hit.size());
    table.add_euclidean(rep);
  }
  // theta(d') = dim - d' vanishes at d' = 1
  auto f_lo = table.fit_euclidean(0), f1 = table.fit_euclidean(1),
       f_hi = table.fit_euclidean(2);
  CHECK(std::abs(f1.slope) < 0.05);
  CHECK(f_lo.slope > 0.0);
  CHECK(f_hi.slope < 0.0);
  // recover the dimension from the zero crossing of the euclidean profile
  double dim = 1.0 - f1.slope;
  CHECK(dim == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("resolution guard rejects sparse samples") {
  core::Region region{-1.0, -1.0, 2.0};
  auto sparse = segment_sample({-0.3, 0.1}, {0.3, 0.1}, 0.2);
  CHECK_THROWS(hit_cells_from_points(region, 7, sparse));
}

TEST_CASE("quantum content at q = 0 equals the hit count") {
  core::Region region{-1.0, -1.0, 2.0};
  auto grid = field::disc_grid(5);
  auto model = field::make_disc_model(grid.centers(), grid.delta());
  RandomStream rng(41, 0);
  auto f = field::sample_field(rng, grid, model);
  auto mu = field::liouville_masses(f, core::GammaParams::make(1.0));
  auto sample = segment_sample({-0.25, 0.0131}, {0.25, 0.0131}, 0.01);
  auto hit = hit_cells_from_points(region, 5, sample);
  std::vector<double> qs{0.0, 0.3};
  auto rep = cover_report(region, 5, hit, &mu, qs, {});
  CHECK(rep.quantum_content[0] == doctest::Approx(static_cast<double>(hit.size())));
  CHECK(rep.quantum_content[1] < rep.quantum_content[0]);  // masses < 1
}

TEST_CASE("segment with independent Liouville masses satisfies KPZ") {
  core::Region region{-1.0, -1.0, 2.0};
  complex a{-0.5, 0.0131}, b{0.5, 0.0131};
  std::vector<double> qs;
  for (double q = 0.30; q <= 0.60001; q += 0.05) qs.push_back(q);
  std::vector<int> levels{4, 5, 6, 7, 8};
  ContentTable table(levels, qs);
  RandomStream rng(42, 1);
  auto g1 = core::GammaParams::make(1.0);
  const int n_fields = 400;
  for (int level : levels) {
    double side = region.size * std::ldexp(1.0, -level);
    auto sample = segment_sample(a, b, side * 0.3);
    auto hit = hit_cells_from_points(region, level, sample);
    auto grid = field::cells_grid(region, level, hit);
    auto model = field::make_disc_model(grid.centers(), grid.delta());
    for (int f = 0; f < n_fields; ++f) {
      auto fld = field::sample_field(rng, grid, model);
      auto mu = field::liouville_masses(fld, g1);
      table.add(cover_report(region, level, hit, &mu, qs, {}));
    }
  }
  double q_star = table.dimension_estimate();
  double d_from_kpz = core::kpz_forward(q_star, g1);
  std::printf("segment KPZ: q* = %.4f, kpz_forward(q*) = %.4f\n", q_star, d_from_kpz);
  CHECK(std::abs(d_from_kpz - 1.0) < 0.12);
}

TEST_CASE("CR-Whitney decomposition of the unit-square corner of the disc") {
  // oracle: CR(z, disc) = 1 - |z|^2 where defined
  CrOracle oracle = [](complex z) -> std::optional<double> {
    double cr = 1.0 - std::norm(z);
    if (cr <= 0.0) return std::nullopt;
    return cr;
  };
  core::Region region{0.0, 0.0, 1.0};
  auto w = cr_whitney_decompose(oracle, region, 7);
  CHECK(w.upper_violations == 0);

  bool found_level3_corner = false;
  for (std::size_t k = 0; k < w.squares.size(); ++k) {
    const auto& s = w.squares[k];
    double side = s.side(region);
    // hard postcondition on every kept square
    REQUIRE(w.cr_center[k] >= 4.0 * side);
    REQUIRE(w.cr_center[k] <= 12.0 * side);
    CHECK(s.level >= 3);  // level <= 2 squares cannot satisfy the lower bound
    if (s.level == 3 && s.i == 0 && s.j == 0) {
      found_level3_corner = true;
      CHECK(w.cr_center[k] == doctest::Approx(1.0 - 2.0 / 256.0));
    }
  }
  CHECK(found_level3_corner);
  // full tiling: kept + discarded area accounts for the region
  CHECK(w.kept_area + w.discarded_area == doctest::Approx(1.0).epsilon(1e-9));
  // complement shrinks as max_level grows (curve/boundary has zero area)
  auto w9 = cr_whitney_decompose(oracle, region, 9);
  CHECK(w9.discarded_area < w.discarded_area);

  export_whitney_csv("/tmp/slegff_whitney.csv", w);
  std::ifstream in("/tmp/slegff_whitney.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "level,i,j,cr_center");
}

TEST_CASE("membership predicate: paper's two examples") {
  core::Region region{0.0, 0.0, 1.0};
  core::DyadicSquare lvl3{3, 0, 0};  // center (1/16, 1/16), side 1/8
  double cr3 = 1.0 - std::norm(lvl3.center(region));
  CHECK(cr3 == doctest::Approx(0.99219).epsilon(1e-4));
  CHECK(is_cr_whitney(region, lvl3, cr3));
  core::DyadicSquare lvl2{2, 0, 0};  // center (1/8, 1/8), side 1/4
  double cr2 = 1.0 - std::norm(lvl2.center(region));
  CHECK(cr2 == doctest::Approx(0.96875));
  CHECK(!is_cr_whitney(region, lvl2, cr2));  // fails 4l <= CR
}

TEST_CASE("whitney green check in the disc stays in the Koebe band") {
  CrOracle oracle = [](complex z) -> std::optional<double> {
    double cr = 1.0 - std::norm(z);
    if (cr <= 0.0) return std::nullopt;
    return cr;
  };
  core::Region region{0.0, 0.0, 1.0};
  auto w = cr_whitney_decompose(oracle, region, 7);
  RandomStream rng(43, 2);
  auto tilde_g = [](complex x, complex y) {
    return std::log(std::abs(1.0 - std::conj(x) * y));
  };
  auto dist = [](complex z) { return 1.0 - std::abs(z); };
  auto stats = whitney_green_check(w, tilde_g, dist, rng, 8);
  REQUIRE(stats.levels.size() >= 3);
  for (std::size_t i = 0; i < stats.levels.size(); ++i) {
    // CR/4 <= d <= CR and 4l <= CR <= 12l give a level-free band
    CHECK(stats.dev_min[i] > -3.0);
    CHECK(stats.dev_max[i] < 3.5);
  }
  // spread is scale independent: adjacent levels within 1.0 of each other
  for (std::size_t i = 1; i < stats.levels.size(); ++i) {
    if (stats.n_pairs[i] < 50 || stats.n_pairs[i - 1] < 50) continue;
    CHECK(std::abs(stats.spread(i) - stats.spread(i - 1)) < 1.0);
  }
}

TEST_CASE("deviation at the square center equals log(CR/d), inside [0, log 4]") {
  CrOracle oracle = [](complex z) -> std::optional<double> {
    double cr = 1.0 - std::norm(z);
    if (cr <= 0.0) return std::nullopt;
    return cr;
  };
  core::Region region{0.0, 0.0, 1.0};
  auto w = cr_whitney_decompose(oracle, region, 6);
  for (std::size_t k = 0; k < w.squares.size(); ++k) {
    complex c = w.squares[k].center(region);
    double dev = std::log(1.0 - std::norm(c)) - std::log(1.0 - std::abs(c));
    CHECK(dev >= 0.0);
    CHECK(dev <= std::log(4.0) + 1e-12);
  }
}

TEST_CASE("winding oscillation statistic ignores constant shifts") {
  CrOracle oracle = [](complex z) -> std::optional<double> {
    double cr = 1.0 - std::norm(z);
    if (cr <= 0.0) return std::nullopt;
    return cr;
  };
  core::Region region{0.0, 0.0, 1.0};
  auto w = cr_whitney_decompose(oracle, region, 6);
  auto base = [](complex z) -> std::optional<double> {
    return std::sin(3.0 * z.real()) + z.imag();
  };
  auto shifted = [&](complex z) -> std::optional<double> { return *base(z) + 17.0; };
  auto s1 = whitney_winding_check(w, base);
  auto s2 = whitney_winding_check(w, shifted);
  REQUIRE(s1.levels.size() == s2.levels.size());
  for (std::size_t i = 0; i < s1.p99.size(); ++i)
    CHECK(s1.p99[i] == doctest::Approx(s2.p99[i]).epsilon(1e-12));
}

TEST_CASE("zero-driving slit: winding vanishes on the axis above the tip") {
  loewner::DrivingPath zero;
  zero.dt = 1e-4;
  zero.kappa = 0.0;
  zero.values.assign(2001, 0.0);  // t_max = 0.2, slit up to 2 sqrt(0.2) i
  zero.finalize();
  std::vector<complex> pts{{0.0, 1.0}, {0.0, 1.5}, {0.0, 2.2}};
  auto b = loewner::make_batch(pts);
  loewner::EvolveOptions eo;
  eo.freeze_tol = 0.0;
  loewner::evolve_batch(b, zero, eo);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    REQUIRE(!b.swallowed(i));
    CHECK(std::abs(b.winding(i)) < 1e-10);
  }
}

TEST_CASE("adaptive cell scan matches the exhaustive scan") {
  RandomStream rng(44, 3);
  auto d = loewner::sample_driving(rng, 2.0, 0.8, 2e-4);
  core::Region region{-1.0, 0.0, 2.0};
  ScanOptions opt;
  opt.evolve.freeze_tol = 1e-4;
  auto scan = scan_chain_cells(d, region, 3, 6, opt, nullptr);

  // exhaustive reference at the deepest level
  std::vector<complex> centers;
  std::vector<core::DyadicSquare> cells;
  std::int64_t n = 64;
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      core::DyadicSquare s{6, i, j};
      cells.push_back(s);
      centers.push_back(s.center(region));
    }
  auto batch = loewner::make_batch(centers);
  loewner::EvolveOptions eo;
  eo.freeze_tol = 1e-4;
  loewner::evolve_batch(batch, d, eo);
  double side = region.size / 64.0;
  std::vector<core::DyadicSquare> hit_ref, whit_ref;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    if (batch.swallowed(k)) {
      hit_ref.push_back(cells[k]);
      continue;
    }
    double cr = batch.cr(k);
    if (cr <= 0.5 * side) hit_ref.push_back(cells[k]);
    if (cr >= 4.0 * side && cr <= 12.0 * side) whit_ref.push_back(cells[k]);
  }
  const auto& lc = scan.per_level.back();
  CHECK(lc.level == 6);
  CHECK(lc.hit.size() == hit_ref.size());
  CHECK(lc.whitney.size() == whit_ref.size());
  std::printf("scan level 6: %zu hit, %zu whitney (exhaustive: %zu, %zu)\n",
              lc.hit.size(), lc.whitney.size(), hit_ref.size(), whit_ref.size());
  // every Whitney square satisfies its inequalities by construction
  for (std::size_t k = 0; k < lc.whitney.size(); ++k) {
    double s_side = lc.whitney[k].side(region);
    CHECK(lc.whitney_cr[k] >= 4.0 * s_side);
    CHECK(lc.whitney_cr[k] <= 12.0 * s_side);
  }
}

TEST_CASE("lower-bound geometry: sub-squares near a pinched center are relaxed-Whitney") {
  RandomStream rng(45, 4);
  core::Region region{-1.0, 0.0, 2.0};
  int checked = 0;
  for (int trial = 0; trial < 6 && checked < 24; ++trial) {
    auto d = loewner::sample_driving(rng, 2.0, 0.8, 2e-4);
    // find level-n cells whose center has CR in [side/3, side/2]
    for (int level : {4, 5}) {
      double side = region.size * std::ldexp(1.0, -level);
      std::int64_t n = std::int64_t{1} << level;
      std::vector<complex> centers;
      std::vector<core::DyadicSquare> cells;
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
          core::DyadicSquare s{level, i, j};
          cells.push_back(s);
          centers.push_back(s.center(region));
        }
      auto batch = loewner::make_batch(centers);
      loewner::EvolveOptions eo;
      eo.freeze_tol = 1e-4;
      loewner::evolve_batch(batch, d, eo);
      for (std::size_t k = 0; k < cells.size(); ++k) {
        if (batch.swallowed(k)) continue;
        double cr = batch.cr(k);
        if (!(cr >= side / 3.0 && cr <= side / 2.0)) continue;
        ++checked;
        // the four level-(n+6) squares around the center
        complex c = cells[k].center(region);
        double sub = side / 64.0;
        std::vector<complex> subcenters{
            c + complex(sub / 2, sub / 2), c + complex(-sub / 2, sub / 2),
            c + complex(sub / 2, -sub / 2), c + complex(-sub / 2, -sub / 2)};
        auto sb = loewner::make_batch(subcenters);
        loewner::evolve_batch(sb, d, eo);
        for (std::size_t m = 0; m < subcenters.size(); ++m) {
          REQUIRE(!sb.swallowed(m));
          double scr = sb.cr(m);
          CHECK(scr >= 4.0 * sub);
          CHECK(scr <= 150.0 * sub);
        }
      }
    }
  }
  std::printf("lower-bound geometry: %d pinched centers checked\n", checked);
  CHECK(checked > 0);
}
