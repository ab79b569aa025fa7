#include "doctest.h"

#include <cmath>
#include <complex>
#include <fstream>
#include <cstdio>
#include <vector>

#include "slegff/diffusion.hpp"
#include "slegff/loewner.hpp"
#include "slegff/stats.hpp"

using namespace slegff;
using namespace slegff::loewner;
using core::complex;

TEST_CASE("driving: kappa = 0 is identically zero, variance is kappa t") {
  RandomStream rng(1, 0);
  auto d0 = sample_driving(rng, 0.0, 1.0, 1e-3);
  for (double v : d0.values) CHECK(v == 0.0);

  Accumulator end;
  const double kappa = 3.0, t_max = 0.5, dt = 1e-3;
  for (int i = 0; i < 10000; ++i) {
    auto d = sample_driving(rng, kappa, t_max, dt);
    end.add(d.values.back() * d.values.back());
  }
  double target = kappa * t_max;
  CHECK(std::abs(end.mean() - target) < 3.0 * end.stderr_mean());
}

TEST_CASE("driving: quadratic variation estimates kappa t_max") {
  RandomStream rng(2, 0);
  const double kappa = 8.0 / 3.0;
  auto d = sample_driving(rng, kappa, 1.0, 1e-5);
  double qv = 0.0;
  for (std::size_t k = 1; k < d.values.size(); ++k) {
    double inc = d.values[k] - d.values[k - 1];
    qv += inc * inc;
  }
  CHECK(qv == doctest::Approx(kappa).epsilon(0.02));
}

TEST_CASE("zero driving: exact closed form, swallow time, zero winding") {
  RandomStream rng(3, 0);
  auto d = sample_driving(rng, 0.0, 0.5, 1e-4);
  std::vector<TrackedPoint> pts{make_point({0.7, 1.1}), make_point({0.0, 2.0}),
                                make_point({-0.4, 0.6})};
  evolve(pts, d, 0, d.n_steps(), {.freeze_tol = 0.0});
  for (auto& p : pts) {
    std::complex<double> expect = std::sqrt(p.z0 * p.z0 + 4.0 * 0.5);
    if (expect.imag() < 0.0) expect = -expect;
    CHECK(p.g.real() == doctest::Approx(expect.real()).epsilon(1e-9));
    CHECK(p.g.imag() == doctest::Approx(expect.imag()).epsilon(1e-9));
  }
  // purely imaginary points stay on the axis with zero winding
  CHECK(std::abs(pts[1].winding()) < 1e-12);

  // z0 = i is swallowed at t = 1/4
  std::vector<TrackedPoint> swallow{make_point({0.0, 1.0})};
  evolve(swallow, d, 0, d.n_steps(), {.freeze_tol = 0.0});
  REQUIRE(swallow[0].state == PointState::swallowed);
  CHECK(swallow[0].swallow_time == doctest::Approx(0.25).epsilon(0.01));

  // conformal radius of 2i at t = 1/4 is 3 (closed form)
  std::vector<TrackedPoint> two_i{make_point({0.0, 2.0})};
  int quarter = static_cast<int>(0.25 / d.dt);
  evolve(two_i, d, 0, quarter, {.freeze_tol = 0.0});
  CHECK(two_i[0].cr() == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("initial conformal radius is 2 Im z") {
  CHECK(make_point({0.0, 2.0}).cr() == doctest::Approx(4.0));
  CHECK(make_point({3.0, 0.5}).cr() == doctest::Approx(1.0));
}

TEST_CASE("conformal radius decreases along the chain") {
  RandomStream rng(4, 0);
  for (int trial = 0; trial < 100; ++trial) {
    auto d = sample_driving(rng, 2.0 + 4.0 * rng.uniform(), 0.3, 2e-4);
    TrackedPoint p = make_point({-1.0 + 2.0 * rng.uniform(), 0.3 + rng.uniform()});
    std::vector<TrackedPoint> v{p};
    double prev = v[0].cr();
    for (int k = 0; k < d.n_steps() && v[0].alive(); k += 25) {
      evolve(v, d, k, std::min(k + 25, d.n_steps()), {.freeze_tol = 0.0});
      double cur = v[0].alive() ? v[0].cr() : v[0].stopped_cr;
      CHECK(cur <= prev * (1.0 + 1e-9));
      prev = cur;
    }
  }
}

TEST_CASE("linear driving converges at first order to an ODE reference") {
  // zeta(t) = c t; reference by RK4 on dg/dt = 2/(g - zeta), dL/dt = -2/(g-zeta)^2
  const double c = 1.3, t_max = 0.4;
  complex z0{0.2, 0.9};
  auto reference = [&](double h) {
    std::complex<double> g = z0, L = 0.0;
    int n = static_cast<int>(t_max / h);
    auto fg = [&](double t, std::complex<double> gg) { return 2.0 / (gg - c * t); };
    for (int k = 0; k < n; ++k) {
      double t = k * h;
      auto k1 = fg(t, g);
      auto k2 = fg(t + 0.5 * h, g + 0.5 * h * k1);
      auto k3 = fg(t + 0.5 * h, g + 0.5 * h * k2);
      auto k4 = fg(t + h, g + h * k3);
      auto um = g + 0.5 * h * k2 - c * (t + 0.5 * h);  // midpoint state
      L += h * (-2.0 / (um * um));
      g += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return std::pair{g, L};
  };
  auto [g_ref, L_ref] = reference(1e-6);

  auto run = [&](double dt) {
    DrivingPath d;
    d.dt = dt;
    d.kappa = 0.0;
    int K = static_cast<int>(t_max / dt);
    d.values.resize(K + 1);
    for (int k = 0; k <= K; ++k) d.values[k] = c * k * dt;
    d.finalize();
    std::vector<TrackedPoint> v{make_point(z0)};
    evolve(v, d, 0, K, {.freeze_tol = 0.0});
    return v[0];
  };
  double e1 = std::abs(run(4e-4).g - g_ref);
  double e2 = std::abs(run(2e-4).g - g_ref);
  double e3 = std::abs(run(1e-4).g - g_ref);
  CHECK(e2 < e1);
  CHECK(e3 < e2);
  CHECK(e1 / e3 > 2.0);  // at least first order
  CHECK(std::abs(run(1e-4).log_deriv.imag() - L_ref.imag()) < 1e-3);
}

TEST_CASE("freezing changes winding and CR by less than the tolerance") {
  RandomStream rng(5, 0);
  for (int trial = 0; trial < 10; ++trial) {
    auto d = sample_driving(rng, 2.0, 4.0, 5e-4);
    std::vector<complex> zs;
    for (int i = 0; i < 30; ++i)
      zs.push_back({-1.0 + 2.0 * rng.uniform(), 0.1 + 1.2 * rng.uniform()});
    auto exact = make_batch(zs);
    evolve_batch(exact, d, {.freeze_tol = 0.0});
    auto frozen = make_batch(zs);
    evolve_batch(frozen, d, {.freeze_tol = 1e-3});
    for (std::size_t i = 0; i < zs.size(); ++i) {
      if (exact.swallowed(i) || frozen.swallowed(i)) continue;
      CHECK(std::abs(frozen.winding(i) - exact.winding(i)) < 2e-3);
      CHECK(std::abs(std::log(frozen.cr(i)) - std::log(exact.cr(i))) < 2e-3);
    }
  }
}

TEST_CASE("simple-curve regime: interior points essentially never swallowed") {
  RandomStream rng(6, 0);
  int swallowed_coarse = 0, swallowed_fine = 0;
  for (int i = 0; i < 150; ++i) {
    auto d_coarse = sample_driving(rng, 2.0, 1.0, 1e-3);
    std::vector<TrackedPoint> p{make_point({0.0, 1.0})};
    evolve(p, d_coarse, 0, d_coarse.n_steps(), {.freeze_tol = 0.0});
    swallowed_coarse += !p[0].alive() && p[0].state == PointState::swallowed;

    auto d_fine = sample_driving(rng, 2.0, 1.0, 1e-4);
    std::vector<TrackedPoint> q{make_point({0.0, 1.0})};
    evolve(q, d_fine, 0, d_fine.n_steps(), {.freeze_tol = 0.0});
    swallowed_fine += !q[0].alive() && q[0].state == PointState::swallowed;
  }
  CHECK(swallowed_fine <= swallowed_coarse + 1);
  CHECK(swallowed_fine <= 3);
  std::printf("kappa=2 spurious swallows: coarse %d fine %d / 150\n",
              swallowed_coarse, swallowed_fine);
}

TEST_CASE("slit-domain Green values are symmetric and positive") {
  RandomStream rng(7, 0);
  auto d = sample_driving(rng, 3.0, 0.5, 2e-4);
  std::vector<complex> zs;
  for (int i = 0; i < 12; ++i)
    zs.push_back({-1.0 + 2.0 * rng.uniform(), 0.2 + 1.5 * rng.uniform()});
  auto b = make_batch(zs);
  evolve_batch(b, d, {.freeze_tol = 0.0});
  for (std::size_t i = 0; i < zs.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (b.swallowed(i) || b.swallowed(j)) continue;
      complex gi{b.g_re[i], b.g_im[i]}, gj{b.g_re[j], b.g_im[j]};
      double gij = greens_slit(gi, gj), gji = greens_slit(gj, gi);
      CHECK(gij == doctest::Approx(gji).epsilon(1e-12));
      CHECK(gij > 0.0);
    }
  }
}

TEST_CASE("run_until_cr hits windows and reports consistent values") {
  RandomStream rng(8, 0);
  const double cr0 = 2.0;  // z0 = i
  double eps = cr0 * std::exp(-2.5);
  int hits = 0;
  for (int i = 0; i < 60; ++i) {
    auto r = run_until_cr(rng, 2.0, {0.0, 1.0}, eps, std::exp(1.0), 2e-4, 25.0);
    if (r.hit) {
      ++hits;
      CHECK(r.cr >= eps);
      CHECK(r.cr < std::exp(1.0) * eps);
      CHECK(!r.swallowed);
    }
  }
  CHECK(hits > 5);  // window probability is a few tens of percent
}

TEST_CASE("winding at a CR level matches the diffusion representation") {
  // Lemma correspondence: winding accumulated until CR drops by e^{-s*} is
  // distributed as int_0^{s*} cot(alpha/2) with alpha_0 = 2 arg z0, given
  // survival; z0 = i gives alpha_0 = pi.
  RandomStream rng(9, 0);
  const double s_star = 2.0;
  const double cr_level = 2.0 * std::exp(-s_star);
  std::vector<double> w_loewner;
  while (w_loewner.size() < 2500) {
    auto w = winding_at_cr_level(rng, 2.0, {0.0, 1.0}, cr_level, 2e-4, 30.0);
    if (w) w_loewner.push_back(*w);
  }
  diffusion::DiffusionConfig cfg;
  cfg.kappa = core::KappaParams::make(2.0);
  cfg.dt_base = 2e-4;
  std::vector<double> w_diff;
  while (w_diff.size() < 2500) {
    diffusion::SdeState st{M_PI, 0.0, 0.0};
    auto r = diffusion::advance_sde(st, cfg, s_star, rng,
                                    [](double, double) { return -1.0; }, nullptr);
    if (r == diffusion::StopReason::reached_time) w_diff.push_back(st.winding);
  }
  auto ks = ks_two_sample(w_loewner, w_diff);
  std::printf("loewner-vs-diffusion winding KS: D=%.4f p=%.4f\n", ks.statistic,
              ks.p_value);
  CHECK(ks.p_value > 0.01);
}

TEST_CASE("trace tips of the zero-driving slit sit on the imaginary axis") {
  DrivingPath d;
  d.dt = 1e-4;
  d.kappa = 0.0;
  d.values.assign(2001, 0.0);
  d.finalize();
  auto tips = trace_tip(d, 100);
  REQUIRE(tips.size() > 10);
  for (std::size_t k = 1; k < tips.size(); ++k) {
    CHECK(std::abs(tips[k].real()) < 1e-9);
    double t = (1.0 + 100.0 * k) * d.dt;
    CHECK(tips[k].imag() == doctest::Approx(2.0 * std::sqrt(t)).epsilon(0.02));
  }
}

TEST_CASE("koebe sandwich against a trace-based distance") {
  RandomStream rng(10, 0);
  auto d = sample_driving(rng, 2.0, 0.6, 1e-4);
  auto tips = trace_tip(d, 5);
  std::vector<complex> zs{{0.4, 0.5}, {-0.6, 0.8}, {0.1, 1.4}, {0.9, 0.3}};
  auto b = make_batch(zs);
  evolve_batch(b, d, {.freeze_tol = 0.0});
  for (std::size_t i = 0; i < zs.size(); ++i) {
    if (b.swallowed(i)) continue;
    double dist = zs[i].imag();  // distance to the real axis
    for (auto tip : tips) dist = std::min(dist, std::abs(zs[i] - tip));
    double cr = b.cr(i);
    CHECK(cr <= 4.0 * dist * 1.05);
    CHECK(dist <= cr * 1.05);
  }
}

TEST_CASE("csv trace dump has the advertised columns") {
  RandomStream rng(11, 0);
  auto d = sample_driving(rng, 2.0, 0.1, 1e-3);
  std::vector<complex> pts{{0.0, 1.0}, {0.5, 0.7}};
  dump_trace_csv("/tmp/slegff_trace.csv", d, pts, 10);
  std::ifstream f("/tmp/slegff_trace.csv");
  std::string header;
  std::getline(f, header);
  CHECK(header ==
        "t,zeta,im_g_0,winding_0,cr_0,im_g_1,winding_1,cr_1");
  int rows = 0;
  std::string line;
  while (std::getline(f, line)) ++rows;
  CHECK(rows == d.n_steps() / 10);
}
