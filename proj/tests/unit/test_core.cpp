#include "doctest.h"

#include <cmath>

#include "slegff/core.hpp"
#include "slegff/rng.hpp"

using namespace slegff;
using namespace slegff::core;

TEST_CASE("derived constants at kappa = 4") {
  auto k = KappaParams::make(4.0);
  CHECK(k.chi == 0.0);
  CHECK(k.lambda0 == 0.5);
  CHECK(k.sle_dim == 1.5);
  CHECK(k.boundary_height == doctest::Approx(M_PI / 2.0));
  CHECK(k.speed_exponent == 0.0);
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(KappaParams::make(0.0), std::domain_error);
  CHECK_THROWS_AS(KappaParams::make(8.0), std::domain_error);
  CHECK_THROWS_AS(GammaParams::make(2.0), std::domain_error);
  CHECK_THROWS_AS(GammaParams::make(-0.1), std::domain_error);
  CHECK(GammaParams::make(0.0).gamma == 0.0);
}

TEST_CASE("derived fields are pure functions of kappa") {
  for (double kap : {0.5, 2.0, 8.0 / 3.0, 3.7, 6.0, 7.9}) {
    auto a = KappaParams::make(kap);
    auto b = KappaParams::make(kap);
    CHECK(a.chi == b.chi);
    CHECK(a.boundary_height == b.boundary_height);
    CHECK(a.sle_dim == b.sle_dim);
    CHECK(a.lambda0 == b.lambda0);
    CHECK(a.speed_exponent == b.speed_exponent);
    CHECK(a.lambda0 > 0.0);
    CHECK(a.lambda0 < 1.0);
    CHECK(a.sle_dim > 1.0);
    CHECK(a.sle_dim < 2.0);
  }
}

TEST_CASE("kpz forward endpoints and paper value") {
  auto g1 = GammaParams::make(1.0);
  auto gs2 = GammaParams::make(std::sqrt(2.0));
  CHECK(kpz_forward(0.0, g1) == 0.0);
  CHECK(kpz_forward(1.0, g1) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(kpz_forward(1.0, gs2) == doctest::Approx(2.0).epsilon(1e-15));
  // gamma^2 = 2: d = 3q - q^2
  CHECK(kpz_forward(0.5, gs2) == doctest::Approx(1.25).epsilon(1e-15));
  CHECK_THROWS_AS(kpz_forward(-0.01, g1), std::domain_error);
  CHECK_THROWS_AS(kpz_forward(1.01, g1), std::domain_error);
}

TEST_CASE("kpz inverse closed-form values") {
  auto g1 = GammaParams::make(1.0);
  auto gs2 = GammaParams::make(std::sqrt(2.0));
  CHECK(kpz_inverse(2.0, g1) == doctest::Approx(1.0).epsilon(1e-14));
  // root of q^2/2 - 2.5 q + 1 = 0 in [0,1]: (5 - sqrt(17))/2
  CHECK(kpz_inverse(1.0, g1) ==
        doctest::Approx((5.0 - std::sqrt(17.0)) / 2.0).epsilon(1e-14));
  // gamma^2 = 2, d = 3/2: root of q^2 - 3q + 3/2 in [0,1]
  CHECK(kpz_inverse(1.5, gs2) ==
        doctest::Approx((3.0 - std::sqrt(3.0)) / 2.0).epsilon(1e-14));
  CHECK_THROWS_AS(kpz_inverse(2.01, g1), std::domain_error);
  // gamma = 0 is linear: q = d/2
  CHECK(kpz_inverse(1.3, GammaParams::make(0.0)) == doctest::Approx(0.65));
}

TEST_CASE("duplantier-sheffield pair") {
  auto g1 = GammaParams::make(1.0);
  CHECK(kpz_ds_forward(0.0, g1) == 0.0);
  CHECK(kpz_ds_forward(1.0, g1) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(kpz_ds_forward(0.5, g1) == doctest::Approx(7.0 / 8.0).epsilon(1e-15));
  CHECK(kpz_ds_inverse(7.0 / 8.0, g1) == doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("flow-line relation: paper values and kappa = 4 linearity") {
  auto gs2 = GammaParams::make(std::sqrt(2.0));
  auto g1 = GammaParams::make(1.0);
  auto k4 = KappaParams::make(4.0);
  auto k2 = KappaParams::make(2.0);
  // kappa = 4 reduces to the linear d = (2 + g^2/2) q
  CHECK(flowline_inverse(1.5, k4, gs2) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(flowline_forward(0.5, k4, gs2) == doctest::Approx(1.5).epsilon(1e-14));
  // kappa = 2, gamma = 1, d = 1.25: q = 10 - sqrt(90)
  CHECK(flowline_inverse(1.25, k2, g1) ==
        doctest::Approx(10.0 - std::sqrt(90.0)).epsilon(1e-13));
  CHECK(flowline_inverse(1.25, k2, g1) < kpz_inverse(1.25, g1));
  // kappa -> 0 limit approaches the plain KPZ inverse
  auto k_small = KappaParams::make(1e-9);
  CHECK(flowline_inverse(1.0, k_small, g1) ==
        doctest::Approx(kpz_inverse(1.0, g1)).epsilon(1e-8));
}

TEST_CASE("round-trips within 1e-12 over random inputs") {
  RandomStream rng(2024, 0);
  for (int i = 0; i < 1000; ++i) {
    double gamma = 1.999 * rng.uniform();
    double d = 2.0 * rng.uniform();
    auto g = GammaParams::make(gamma);
    CHECK(std::abs(kpz_forward(kpz_inverse(d, g), g) - d) < 1e-12);
    double x = 2.0 * rng.uniform();
    CHECK(std::abs(kpz_ds_forward(kpz_ds_inverse(x, g), g) - x) < 1e-12);
    double kap = 1e-6 + (8.0 - 2e-6) * rng.uniform();
    auto k = KappaParams::make(kap);
    CHECK(std::abs(flowline_forward(flowline_inverse(d, k, g), k, g) - d) < 1e-12);
  }
}

TEST_CASE("flow-line quantum dimension sits below the KPZ one at d = 1 + k/8") {
  for (double gamma : {0.5, 1.0, 1.5}) {
    auto g = GammaParams::make(gamma);
    double prev_gap_left = -1.0;
    for (double kap = 0.25; kap < 8.0; kap += 0.25) {
      auto k = KappaParams::make(kap);
      double d = k.sle_dim;
      double q_flow = flowline_inverse(d, k, g);
      double q_kpz = kpz_inverse(d, g);
      CHECK(q_flow <= q_kpz + 1e-14);
      if (std::abs(kap - 4.0) > 0.2) CHECK(q_flow < q_kpz);
      (void)prev_gap_left;
    }
    // equality is approached at both ends
    auto near0 = KappaParams::make(1e-7);
    auto near8 = KappaParams::make(8.0 - 1e-7);
    CHECK(flowline_inverse(near0.sle_dim, near0, g) ==
          doctest::Approx(kpz_inverse(near0.sle_dim, g)).epsilon(1e-6));
    CHECK(flowline_inverse(near8.sle_dim, near8, g) ==
          doctest::Approx(kpz_inverse(near8.sle_dim, g)).epsilon(1e-6));
  }
}

TEST_CASE("dyadic squares: geometry and indexing") {
  Region r{-1.0, -1.0, 2.0};
  DyadicSquare s{3, 0, 0};
  CHECK(s.side(r) == doctest::Approx(0.25));
  CHECK(s.center(r).real() == doctest::Approx(-0.875));
  CHECK(s.center(r).imag() == doctest::Approx(-0.875));
  CHECK(s.contains(r, {-0.9, -0.8}));
  CHECK(!s.contains(r, {0.0, 0.0}));

  auto c = cell_of(r, {0.3, 0.7}, 4);
  CHECK(c.level == 4);
  CHECK(c.contains(r, {0.3, 0.7}));

  auto kids = s.children();
  REQUIRE(kids.size() == 4);
  double area = 0.0;
  for (auto& k : kids) {
    CHECK(k.level == 4);
    area += k.side(r) * k.side(r);
  }
  CHECK(area == doctest::Approx(s.side(r) * s.side(r)));
}
