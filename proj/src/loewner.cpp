#include "slegff/loewner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace slegff::loewner {

namespace {

// Principal square root by hand (no <complex> call overhead), then flipped to
// the Im >= 0 branch.
inline void csqrt_upper(double x, double y, double& rx, double& ry) {
  double r = std::sqrt(x * x + y * y);
  if (r == 0.0) {
    rx = 0.0;
    ry = 0.0;
    return;
  }
  double t = std::sqrt(0.5 * (r + std::abs(x)));
  if (x >= 0.0) {
    rx = t;
    ry = y / (2.0 * t);
  } else {
    rx = std::abs(y) / (2.0 * t);
    ry = std::copysign(t, y);
  }
  if (ry < 0.0) {
    rx = -rx;
    ry = -ry;
  }
}

// One exact vertical-slit update in the frame centred at zmid:
//   u = g - zmid, u' = sqrt(u^2 + 4dt) (Im > 0), g <- u' + zmid,
//   log_deriv += log(u/u') = -1/2 log(1 + 4dt/u^2).
// Series evaluation of both sqrt(1+e) and log1p(e) when |e| is small; the
// exact path otherwise. Returns false when the point is swallowed.
inline bool slit_step(double& gr, double& gi, double& lr, double& li, double zmid,
                      double four_dt, double swallow_eps) {
  if (gi < swallow_eps) return false;
  double ur = gr - zmid, ui = gi;
  double u2r = ur * ur - ui * ui;
  double u2i = 2.0 * ur * ui;
  double m2 = u2r * u2r + u2i * u2i;
  if (m2 < 1e-280) return false;  // at the tip

  double er = four_dt * u2r / m2;
  double ei = -four_dt * u2i / m2;
  double ea2 = er * er + ei * ei;

  if (ea2 <= 2.5e-3) {  // |eps| <= 0.05
    // sqrt(1+e): 1 + e/2 - e^2/8 + e^3/16 - 5e^4/128 + 7e^5/256 - 21e^6/1024 + 33e^7/2048
    // log1p(e):  e - e^2/2 + e^3/3 - e^4/4 + e^5/5 - e^6/6 + e^7/7
    static constexpr double sq[8] = {1.0,        0.5,        -0.125,      0.0625,
                                     -0.0390625, 0.02734375, -0.02050781250,
                                     0.01611328125};
    double pr = 1.0, pi = 0.0;        // e^k
    double sr = sq[0], si = 0.0;      // sqrt series
    double gr2 = 0.0, gi2 = 0.0;      // log1p series
    for (int k = 1; k <= 7; ++k) {
      double npr = pr * er - pi * ei;
      double npi = pr * ei + pi * er;
      pr = npr;
      pi = npi;
      sr += sq[k] * pr;
      si += sq[k] * pi;
      double lc = ((k & 1) ? 1.0 : -1.0) / k;
      gr2 += lc * pr;
      gi2 += lc * pi;
    }
    double nur = ur * sr - ui * si;
    double nui = ur * si + ui * sr;
    gr = nur + zmid;
    gi = nui;
    lr -= 0.5 * gr2;
    li -= 0.5 * gi2;
  } else {
    double wr, wi;
    csqrt_upper(u2r + four_dt, u2i, wr, wi);
    if (wi < swallow_eps) return false;
    // log(u/u') = log|u/u'| + i arg(u/u')
    double qr = (ur * wr + ui * wi), qi = (ui * wr - ur * wi);  // u * conj(u')
    double w2 = wr * wr + wi * wi;
    lr += 0.5 * std::log((qr * qr + qi * qi) / (w2 * w2));
    li += std::atan2(qi, qr);
    gr = wr + zmid;
    gi = wi;
  }
  return gi >= swallow_eps;
}

inline double cr_of(double gi, double lr) { return 2.0 * gi * std::exp(-lr); }

}  // namespace

void DrivingPath::finalize() {
  int K = static_cast<int>(values.size()) - 1;
  midpoints.resize(K);
  for (int k = 0; k < K; ++k) midpoints[k] = 0.5 * (values[k] + values[k + 1]);
  suffix_min.resize(K + 1);
  suffix_max.resize(K + 1);
  suffix_min[K] = suffix_max[K] = values[K];
  for (int k = K - 1; k >= 0; --k) {
    suffix_min[k] = std::min(values[k], suffix_min[k + 1]);
    suffix_max[k] = std::max(values[k], suffix_max[k + 1]);
  }
}

DrivingPath sample_driving(RandomStream& rng, double kappa, double t_max, double dt) {
  if (!(kappa >= 0.0)) throw std::domain_error("kappa must be nonnegative");
  if (!(dt > 0.0 && t_max > 0.0)) throw std::invalid_argument("need dt, t_max > 0");
  DrivingPath d;
  d.dt = dt;
  d.kappa = kappa;
  int K = static_cast<int>(std::ceil(t_max / dt));
  d.values.resize(K + 1);
  d.values[0] = 0.0;
  double step_sd = std::sqrt(kappa * dt);
  for (int k = 1; k <= K; ++k) d.values[k] = d.values[k - 1] + step_sd * rng.normal();
  d.finalize();
  return d;
}

TrackedPoint make_point(complex z0) {
  if (!(z0.imag() > 0.0))
    throw std::domain_error("tracked points must have positive imaginary part");
  TrackedPoint p;
  p.z0 = z0;
  p.g = z0;
  p.log_deriv = 0.0;
  return p;
}

double TrackedPoint::cr() const {
  if (state == PointState::alive) return cr_of(g.imag(), log_deriv.real());
  return stopped_cr;
}

double TrackedPoint::winding() const {
  if (state == PointState::alive) return log_deriv.imag();
  return stopped_winding;
}

namespace {

// Freeze test: remaining hull growth lives inside a box around the driving's
// future range; once 16 * remaining_capacity / dist^2 is below tolerance the
// point's CR and winding can no longer move by more than ~tol. The
// kernel-safe variant additionally bounds the relative motion of g - conj(g')
// pairs, which scales like remaining / (dist * Im g).
inline bool can_freeze(double gr, double gi, const DrivingPath& d, int k,
                       const EvolveOptions& opt) {
  double remaining = (d.n_steps() - k) * d.dt;
  double reach = 4.0 * std::sqrt(remaining);
  double lo = d.suffix_min[k] - reach;
  double hi = d.suffix_max[k] + reach;
  double dx = (gr < lo) ? lo - gr : (gr > hi ? gr - hi : 0.0);
  double dy = std::max(0.0, gi - 0.5 * reach);
  double dist2 = dx * dx + dy * dy;
  if (!(16.0 * remaining < opt.freeze_tol * dist2)) return false;
  if (opt.kernel_safe)
    return 4.0 * remaining < opt.freeze_tol * std::sqrt(dist2) * gi;
  return true;
}

}  // namespace

void evolve(std::span<TrackedPoint> points, const DrivingPath& driving, int k_from,
            int k_to, const EvolveOptions& opt) {
  const double four_dt = 4.0 * driving.dt;
  const double swallow_eps =
      opt.swallow_eps_factor * std::sqrt(std::max(1.0, driving.t_max()));
  k_to = std::min(k_to, driving.n_steps());
  for (auto& p : points) {
    if (p.state != PointState::alive) continue;
    double gr = p.g.real(), gi = p.g.imag();
    double lr = p.log_deriv.real(), li = p.log_deriv.imag();
    for (int k = k_from; k < k_to; ++k) {
      if (opt.freeze_tol > 0.0 && (k - k_from) % opt.freeze_stride == 0 &&
          can_freeze(gr, gi, driving, k, opt)) {
        p.state = PointState::frozen;
        break;
      }
      double pg_i = gi, pl_r = lr, pl_i = li;
      if (!slit_step(gr, gi, lr, li, driving.midpoints[k], four_dt, swallow_eps)) {
        p.state = PointState::swallowed;
        p.swallow_time = k * driving.dt;
        p.stopped_winding = pl_i;
        p.stopped_cr = cr_of(pg_i, pl_r);
        break;
      }
    }
    p.g = {gr, gi};
    p.log_deriv = {lr, li};
    if (p.state == PointState::frozen) {
      p.stopped_winding = li;
      p.stopped_cr = cr_of(gi, lr);
    }
  }
}

PointBatch make_batch(std::span<const complex> pts) {
  PointBatch b;
  std::size_t n = pts.size();
  b.z0.assign(pts.begin(), pts.end());
  b.g_re.resize(n);
  b.g_im.resize(n);
  b.ld_re.assign(n, 0.0);
  b.ld_im.assign(n, 0.0);
  b.state.assign(n, PointState::alive);
  b.stop_cr.assign(n, 0.0);
  b.stop_winding.assign(n, 0.0);
  b.swallow_t.assign(n, -1.0);
  for (std::size_t i = 0; i < n; ++i) {
    b.g_re[i] = pts[i].real();
    b.g_im[i] = pts[i].imag();
  }
  return b;
}

double PointBatch::cr(std::size_t i) const {
  if (state[i] == PointState::alive) return cr_of(g_im[i], ld_re[i]);
  return stop_cr[i];
}

double PointBatch::winding(std::size_t i) const {
  if (state[i] == PointState::alive) return ld_im[i];
  return stop_winding[i];
}

void evolve_batch(PointBatch& batch, const DrivingPath& driving,
                  const EvolveOptions& opt) {
  const double four_dt = 4.0 * driving.dt;
  const double swallow_eps =
      opt.swallow_eps_factor * std::sqrt(std::max(1.0, driving.t_max()));
  const int K = driving.n_steps();
  const double* zm = driving.midpoints.data();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch.state[i] != PointState::alive) continue;
    double gr = batch.g_re[i], gi = batch.g_im[i];
    double lr = batch.ld_re[i], li = batch.ld_im[i];
    for (int k = 0; k < K; ++k) {
      if (opt.freeze_tol > 0.0 && k % opt.freeze_stride == 0 &&
          can_freeze(gr, gi, driving, k, opt)) {
        batch.state[i] = PointState::frozen;
        break;
      }
      double pg_i = gi, pl_r = lr, pl_i = li;
      if (!slit_step(gr, gi, lr, li, zm[k], four_dt, swallow_eps)) {
        batch.state[i] = PointState::swallowed;
        batch.swallow_t[i] = k * driving.dt;
        batch.stop_winding[i] = pl_i;
        batch.stop_cr[i] = cr_of(pg_i, pl_r);
        break;
      }
    }
    batch.g_re[i] = gr;
    batch.g_im[i] = gi;
    batch.ld_re[i] = lr;
    batch.ld_im[i] = li;
    if (batch.state[i] == PointState::frozen) {
      batch.stop_winding[i] = li;
      batch.stop_cr[i] = cr_of(gi, lr);
    }
  }
}

void evolve_batch(PointBatch& batch, std::span<const DrivingPath> segments,
                  const EvolveOptions& opt) {
  double t_total = 0.0;
  for (const auto& s : segments) t_total += s.t_max();
  for (std::size_t k = 0; k < segments.size(); ++k) {
    EvolveOptions o = opt;
    o.swallow_eps_factor = opt.swallow_eps_factor *
                           std::sqrt(std::max(1.0, t_total)) /
                           std::sqrt(std::max(1.0, segments[k].t_max()));
    if (k + 1 < segments.size()) o.freeze_tol = 0.0;
    evolve_batch(batch, segments[k], o);
  }
}

std::vector<DrivingPath> sample_tiered_driving(RandomStream& rng, double kappa,
                                               double t_fine, double dt_fine,
                                               double t_max, double dt_coarse) {
  std::vector<DrivingPath> out;
  out.push_back(sample_driving(rng, kappa, t_fine, dt_fine));
  if (t_max > t_fine) {
    DrivingPath d;
    d.dt = dt_coarse;
    d.kappa = kappa;
    int K = static_cast<int>(std::ceil((t_max - t_fine) / dt_coarse));
    d.values.resize(K + 1);
    d.values[0] = out.front().values.back();
    double step_sd = std::sqrt(kappa * dt_coarse);
    for (int k = 1; k <= K; ++k) d.values[k] = d.values[k - 1] + step_sd * rng.normal();
    d.finalize();
    out.push_back(std::move(d));
  }
  return out;
}

CrRun run_until_cr(RandomStream& rng, double kappa, complex z0, double eps, double C,
                   double dt, double t_max) {
  if (!(eps > 0.0 && C > 1.0)) throw std::invalid_argument("need eps > 0, C > 1");
  const double four_dt = 4.0 * dt;
  const double swallow_eps = 1e-9 * std::sqrt(std::max(1.0, t_max));
  const double step_sd = std::sqrt(kappa * dt);
  const double log_lo = std::log(eps);
  const int K = static_cast<int>(std::ceil(t_max / dt));

  double zeta = 0.0, zeta_next = 0.0;
  double gr = z0.real(), gi = z0.imag(), lr = 0.0, li = 0.0;
  CrRun out;
  for (int k = 0; k < K; ++k) {
    zeta_next = zeta + step_sd * rng.normal();
    double pg_i = gi, pl_r = lr, pl_i = li;
    if (!slit_step(gr, gi, lr, li, 0.5 * (zeta + zeta_next), four_dt, swallow_eps)) {
      out.swallowed = true;
      out.winding = pl_i;
      out.cr = cr_of(pg_i, pl_r);
      out.capacity = k * dt;
      out.hit = out.cr >= eps && out.cr < C * eps;
      return out;
    }
    zeta = zeta_next;
    double log_cr = std::log(2.0 * gi) - lr;
    if (log_cr < log_lo) {  // fell through the window
      out.winding = li;
      out.cr = std::exp(log_cr);
      out.capacity = (k + 1) * dt;
      out.hit = false;
      return out;
    }
  }
  out.winding = li;
  out.cr = cr_of(gi, lr);
  out.capacity = t_max;
  out.hit = out.cr >= eps && out.cr < C * eps;
  return out;
}

std::optional<double> winding_at_cr_level(RandomStream& rng, double kappa, complex z0,
                                          double cr_level, double dt, double t_max) {
  const double four_dt = 4.0 * dt;
  const double swallow_eps = 1e-9 * std::sqrt(std::max(1.0, t_max));
  const double step_sd = std::sqrt(kappa * dt);
  const double log_target = std::log(cr_level);
  const int K = static_cast<int>(std::ceil(t_max / dt));

  double zeta = 0.0;
  double gr = z0.real(), gi = z0.imag(), lr = 0.0, li = 0.0;
  double log_cr_prev = std::log(2.0 * gi) - lr;
  double w_prev = li;
  for (int k = 0; k < K; ++k) {
    double zeta_next = zeta + step_sd * rng.normal();
    if (!slit_step(gr, gi, lr, li, 0.5 * (zeta + zeta_next), four_dt, swallow_eps))
      return std::nullopt;
    zeta = zeta_next;
    double log_cr = std::log(2.0 * gi) - lr;
    if (log_cr <= log_target) {
      double f = (log_cr_prev - log_target) / (log_cr_prev - log_cr);
      return w_prev + (li - w_prev) * f;
    }
    log_cr_prev = log_cr;
    w_prev = li;
  }
  return std::nullopt;
}

std::vector<complex> trace_tip(const DrivingPath& driving, int stride) {
  std::vector<complex> tips;
  const double dt = driving.dt;
  const int K = driving.n_steps();
  tips.reserve(K / stride + 1);
  for (int k = 1; k <= K; k += stride) {
    // tip of slit k in the frame after k-1 steps, pulled back to the start
    double wr = driving.midpoints[k - 1];
    double wi = 2.0 * std::sqrt(dt);
    for (int j = k - 2; j >= 0; --j) {
      double ur = wr - driving.midpoints[j], ui = wi;
      double u2r = ur * ur - ui * ui - 4.0 * dt;
      double u2i = 2.0 * ur * ui;
      double rr, ri;
      csqrt_upper(u2r, u2i, rr, ri);
      wr = rr + driving.midpoints[j];
      wi = ri;
    }
    tips.emplace_back(wr, wi);
  }
  return tips;
}

double greens_slit(complex gx, complex gy) {
  return std::log(std::abs(gx - std::conj(gy))) - std::log(std::abs(gx - gy));
}

void dump_trace_csv(const std::string& path, const DrivingPath& driving,
                    std::span<const complex> points, int stride,
                    const EvolveOptions& opt) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("dump_trace_csv: cannot open " + path);
  std::vector<TrackedPoint> pts;
  for (auto z : points) pts.push_back(make_point(z));
  f << "t,zeta";
  for (std::size_t i = 0; i < pts.size(); ++i)
    f << ",im_g_" << i << ",winding_" << i << ",cr_" << i;
  f << "\n";
  char buf[64];
  for (int k = 0; k < driving.n_steps(); k += stride) {
    int k_next = std::min(k + stride, driving.n_steps());
    std::snprintf(buf, sizeof buf, "%.17g", k * driving.dt);
    f << buf;
    std::snprintf(buf, sizeof buf, ",%.17g", driving.values[k]);
    f << buf;
    for (auto& p : pts) {
      std::snprintf(buf, sizeof buf, ",%.17g", p.g.imag());
      f << buf;
      std::snprintf(buf, sizeof buf, ",%.17g", p.winding());
      f << buf;
      std::snprintf(buf, sizeof buf, ",%.17g", p.cr());
      f << buf;
    }
    f << "\n";
    EvolveOptions o = opt;
    o.freeze_tol = 0.0;
    evolve(pts, driving, k, k_next, o);
  }
  f.close();
}

}  // namespace slegff::loewner
