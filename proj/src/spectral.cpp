#include "slegff/spectral.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "slegff/quad.hpp"

namespace slegff::spectral {

namespace {

double scale_exponent(double kappa) { return 8.0 / kappa - 2.0; }

void require_kappa(double kappa) {
  if (!(kappa > 0.0 && kappa < 8.0))
    throw std::domain_error("scale function requires 0 < kappa < 8");
}

double scale_integral(double a, double b, double p) {
  return integrate_de(
      [p](double u) { return std::pow(std::sin(0.5 * u), p); }, a, b, 1e-12);
}

}  // namespace

double scale_function(double x, double kappa) {
  require_kappa(kappa);
  if (!(x >= 0.0 && x <= 2.0 * M_PI))
    throw std::domain_error("scale function argument outside [0, 2pi]");
  return scale_integral(0.0, x, scale_exponent(kappa));
}

double scale_total(double kappa) { return scale_function(2.0 * M_PI, kappa); }

double greens_function(double x, double y, double kappa) {
  require_kappa(kappa);
  if (!(x > 0.0 && x < 2.0 * M_PI && y > 0.0 && y < 2.0 * M_PI))
    throw std::domain_error("greens_function arguments must lie in (0, 2pi)");
  double lo = std::min(x, y), hi = std::max(x, y);
  double p = scale_exponent(kappa);
  double s_lo = scale_integral(0.0, lo, p);
  double s_hi_co = scale_integral(hi, 2.0 * M_PI, p);  // s(2pi) - s(hi)
  double s_tot = s_lo + scale_integral(lo, hi, p) + s_hi_co;
  return s_lo * s_hi_co / s_tot;
}

double drift_everlasting(double x) {
  return std::cos(0.5 * x) / std::sin(0.5 * x) * 2.0;
}

double mean_exit_time(double kappa, double x) {
  require_kappa(kappa);
  if (!(x > 0.0 && x < 2.0 * M_PI))
    throw std::domain_error("mean_exit_time argument must lie in (0, 2pi)");
  double p = scale_exponent(kappa);
  double s_x = scale_integral(0.0, x, p);
  double s_x_co = scale_integral(x, 2.0 * M_PI, p);
  double s_tot = s_x + s_x_co;
  auto m_of = [&](double y) { return std::pow(std::sin(0.5 * y), -p); };
  // int_0^x s(y) m(y) dy and int_x^{2pi} (s(2pi)-s(y)) m(y) dy; both
  // integrands vanish linearly at their singular end.
  double left = integrate_de(
      [&](double y) { return scale_integral(0.0, y, p) * m_of(y); }, 0.0, x, 1e-9);
  double right = integrate_de(
      [&](double y) { return scale_integral(y, 2.0 * M_PI, p) * m_of(y); }, x,
      2.0 * M_PI, 1e-9);
  return (2.0 / kappa) * (s_x_co * left + s_x * right) / s_tot;
}

SpectralSystem eigen_solve(double kappa, int m_nodes, EigenOptions opt) {
  require_kappa(kappa);
  if (m_nodes < 500) throw std::invalid_argument("eigen_solve requires M >= 500");

  SpectralSystem sys;
  sys.kappa = core::KappaParams::make(kappa);
  const int M = m_nodes;
  const double p = opt.grading;
  const double pe = scale_exponent(kappa);

  sys.grid.resize(M);
  sys.quad_w.resize(M);
  sys.speed.resize(M);
  // Graded map B(xi) = xi^p / (xi^p + (1-xi)^p); nodes at midpoints in xi.
  for (int k = 0; k < M; ++k) {
    double xi = (k + 0.5) / M;
    double ap = std::pow(xi, p), bp = std::pow(1.0 - xi, p);
    double denom = ap + bp;
    double B = ap / denom;
    double dB = p * (std::pow(xi, p - 1.0) * bp + std::pow(1.0 - xi, p - 1.0) * ap) /
                (denom * denom);
    sys.grid[k] = 2.0 * M_PI * B;
    sys.quad_w[k] = 2.0 * M_PI * dB / M;
    sys.speed[k] = std::pow(std::sin(0.5 * sys.grid[k]), -pe);
  }

  // Scale function at the nodes by cumulative quadrature over node intervals;
  // the co-scale is accumulated from the right so that s(2pi)-s(x) carries no
  // cancellation near 2pi.
  sys.scale.resize(M);
  sys.scale_co.resize(M);
  {
    double acc = 0.0, prev = 0.0;
    for (int k = 0; k < M; ++k) {
      acc += scale_integral(prev, sys.grid[k], pe);
      sys.scale[k] = acc;
      prev = sys.grid[k];
    }
    double acc_r = scale_integral(sys.grid[M - 1], 2.0 * M_PI, pe);
    sys.scale_co[M - 1] = acc_r;
    for (int k = M - 2; k >= 0; --k) {
      acc_r += scale_integral(sys.grid[k], sys.grid[k + 1], pe);
      sys.scale_co[k] = acc_r;
    }
    sys.scale_2pi = 0.5 * (sys.scale[M - 1] + sys.scale_co[M - 1] +
                           sys.scale[0] + sys.scale_co[0]);
  }

  // Symmetrized Nystrom kernel.
  std::vector<double> half_w(M);
  for (int k = 0; k < M; ++k) half_w[k] = std::sqrt(sys.speed[k] * sys.quad_w[k]);
  Eigen::MatrixXd K(M, M);
  for (int i = 0; i < M; ++i) {
    for (int j = 0; j <= i; ++j) {
      double G = sys.scale[j] * sys.scale_co[i] / sys.scale_2pi;  // j <= i
      K(i, j) = K(j, i) = half_w[i] * half_w[j] * G;
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("eigen_solve: dense solver failed");
  const auto& theta = es.eigenvalues();   // ascending
  if (theta(M - 1) <= 0.0)
    throw std::runtime_error(
        "eigen_solve: non-positive leading eigenvalue (grid too coarse)");

  // Mode count: keep while lambda e^{-lambda/2} >= 1e-14 (matches the T > 0.5
  // usage floor of the survival series), at least 8.
  int n_keep = opt.n_modes;
  if (n_keep <= 0) {
    n_keep = 0;
    for (int i = 0; i < M; ++i) {
      double th = theta(M - 1 - i);
      if (th <= 0.0) break;
      double lam = 0.5 * kappa / th;
      if (n_keep >= 8 && lam * std::exp(-0.5 * lam) < 1e-14) break;
      ++n_keep;
    }
  }
  n_keep = std::min(n_keep, M);

  sys.eigenvalues.resize(n_keep);
  sys.modes.assign(n_keep, std::vector<double>(M));
  sys.coeffs.resize(n_keep);
  for (int i = 0; i < n_keep; ++i) {
    double th = theta(M - 1 - i);
    if (th <= 0.0)
      throw std::runtime_error("eigen_solve: requested mode has non-positive eigenvalue");
    sys.eigenvalues[i] = 0.5 * kappa / th;
    double c = 0.0;
    for (int k = 0; k < M; ++k) c += es.eigenvectors()(k, M - 1 - i) * half_w[k];
    // Deterministic sign: phi_0 positive; higher modes positive at their
    // largest-magnitude node.
    double flip = 1.0;
    if (i == 0) {
      flip = (c >= 0.0) ? 1.0 : -1.0;
    } else {
      int k_star = 0;
      double best = 0.0;
      for (int k = 0; k < M; ++k) {
        double v = std::abs(es.eigenvectors()(k, M - 1 - i));
        if (v > best) {
          best = v;
          k_star = k;
        }
      }
      flip = (es.eigenvectors()(k_star, M - 1 - i) >= 0.0) ? 1.0 : -1.0;
    }
    sys.coeffs[i] = flip * c;
    for (int k = 0; k < M; ++k)
      sys.modes[i][k] = flip * es.eigenvectors()(k, M - 1 - i) / half_w[k];

    // Edge eigenvector entries below the dense solver's noise floor are
    // replaced by the boundary power law sin^{8/k-1}(x/2) continued from the
    // nearest reliable node (phi_i/phi_0 tends to a constant at the ends).
    double vmax = 0.0;
    for (int k = 0; k < M; ++k)
      vmax = std::max(vmax, std::abs(es.eigenvectors()(k, M - 1 - i)));
    const double floor = 1e-12 * vmax;
    const double be = 8.0 / kappa - 1.0;
    int kl = 0;
    while (kl < M - 1 && std::abs(es.eigenvectors()(kl, M - 1 - i)) < floor) ++kl;
    for (int k = 0; k < kl; ++k)
      sys.modes[i][k] = sys.modes[i][kl] *
                        std::pow(std::sin(0.5 * sys.grid[k]) /
                                     std::sin(0.5 * sys.grid[kl]), be);
    int kr = M - 1;
    while (kr > 0 && std::abs(es.eigenvectors()(kr, M - 1 - i)) < floor) --kr;
    for (int k = kr + 1; k < M; ++k)
      sys.modes[i][k] = sys.modes[i][kr] *
                        std::pow(std::sin(0.5 * sys.grid[k]) /
                                     std::sin(0.5 * sys.grid[kr]), be);
  }
  for (int k = 0; k < M; ++k)
    if (!(sys.modes[0][k] > 0.0))
      throw std::runtime_error("eigen_solve: ground mode not strictly positive");

  // Mode derivatives from the Sturm-Liouville identity
  //   (k/2) m phi' |_a^x = -lambda int_a^x phi m,
  // anchored by a local polynomial derivative at the node nearest pi.
  int ka = 0;
  for (int k = 1; k < M; ++k)
    if (std::abs(sys.grid[k] - M_PI) < std::abs(sys.grid[ka] - M_PI)) ka = k;
  sys.mode_deriv.assign(n_keep, std::vector<double>(M));
  for (int i = 0; i < n_keep; ++i) {
    const auto& phi = sys.modes[i];
    // quartic least squares through 5 nodes centred at ka
    double d_anchor;
    {
      int lo = std::clamp(ka - 2, 0, M - 5);
      Eigen::MatrixXd A(5, 5);
      Eigen::VectorXd b(5);
      for (int r = 0; r < 5; ++r) {
        double dx = sys.grid[lo + r] - sys.grid[ka];
        double v = 1.0;
        for (int ccol = 0; ccol < 5; ++ccol) {
          A(r, ccol) = v;
          v *= dx;
        }
        b(r) = phi[lo + r];
      }
      Eigen::VectorXd sol = A.fullPivLu().solve(b);
      d_anchor = sol(1);
    }
    double A_i = 0.5 * kappa * sys.speed[ka] * d_anchor;
    double lam = sys.eigenvalues[i];
    // cumulative int_{x_a}^{x_k} phi m with half-cell ends
    double run = 0.0;
    std::vector<double> I(M, 0.0);
    for (int k = ka + 1; k < M; ++k) {
      double seg = 0.5 * phi[k - 1] * sys.speed[k - 1] * sys.quad_w[k - 1] +
                   0.5 * phi[k] * sys.speed[k] * sys.quad_w[k];
      run += seg;
      I[k] = run;
    }
    run = 0.0;
    for (int k = ka - 1; k >= 0; --k) {
      double seg = 0.5 * phi[k + 1] * sys.speed[k + 1] * sys.quad_w[k + 1] +
                   0.5 * phi[k] * sys.speed[k] * sys.quad_w[k];
      run -= seg;
      I[k] = run;
    }
    for (int k = 0; k < M; ++k)
      sys.mode_deriv[i][k] = (A_i - lam * I[k]) * 2.0 / (kappa * sys.speed[k]);
  }
  return sys;
}

namespace {

// Interval index for x in the grid: largest k with grid[k] <= x, in [0, M-2].
int locate(const std::vector<double>& g, double x) {
  auto it = std::upper_bound(g.begin(), g.end(), x);
  int k = static_cast<int>(it - g.begin()) - 1;
  return std::clamp(k, 0, static_cast<int>(g.size()) - 2);
}

}  // namespace

double SpectralSystem::mode_value(int i, double x) const {
  const auto& g = grid;
  double be = 8.0 / kappa.kappa - 1.0;
  if (x <= g.front()) {
    if (x <= 0.0) return 0.0;
    double r = std::sin(0.5 * x) / std::sin(0.5 * g.front());
    return modes[i].front() * std::pow(r, be);
  }
  if (x >= g.back()) {
    if (x >= 2.0 * M_PI) return 0.0;
    double r = std::sin(0.5 * x) / std::sin(0.5 * g.back());
    return modes[i].back() * std::pow(r, be);
  }
  int k = locate(g, x);
  double h = g[k + 1] - g[k];
  double t = (x - g[k]) / h;
  double t2 = t * t, t3 = t2 * t;
  double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
  double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
  return h00 * modes[i][k] + h10 * h * mode_deriv[i][k] + h01 * modes[i][k + 1] +
         h11 * h * mode_deriv[i][k + 1];
}

double SpectralSystem::mode_deriv_value(int i, double x) const {
  const auto& g = grid;
  if (x <= g.front() || x >= g.back()) {
    // differentiate the boundary power law
    double be = 8.0 / kappa.kappa - 1.0;
    double edge = (x <= g.front()) ? g.front() : g.back();
    if (x <= 0.0 || x >= 2.0 * M_PI) x = edge;
    double base = std::sin(0.5 * x) / std::sin(0.5 * edge);
    int k = (x <= g.front()) ? 0 : n_nodes() - 1;
    return modes[i][k] * be * std::pow(base, be - 1.0) * 0.5 * std::cos(0.5 * x) /
           std::sin(0.5 * edge);
  }
  int k = locate(g, x);
  double t = (x - g[k]) / (g[k + 1] - g[k]);
  return mode_deriv[i][k] * (1.0 - t) + mode_deriv[i][k + 1] * t;
}

std::vector<double> SpectralSystem::boundary_growth_table() const {
  std::vector<double> out(n_modes(), 0.0);
  for (int i = 0; i < n_modes(); ++i) {
    double mx = 0.0;
    for (int k = 0; k < n_nodes(); ++k)
      mx = std::max(mx, std::abs(modes[i][k] / modes[0][k]));
    out[i] = mx;
  }
  return out;
}

namespace {

void require_t(double t) {
  if (!(t > 0.5))
    throw std::invalid_argument(
        "survival series only used for T > 0.5; use Monte Carlo below that");
}

}  // namespace

double survival_probability(const SpectralSystem& sys, double x, double T) {
  require_t(T);
  double lam0 = sys.eigenvalues[0];
  double acc = 0.0;
  for (int i = 0; i < sys.n_modes(); ++i)
    acc += sys.coeffs[i] * sys.mode_value(i, x) *
           std::exp(-(sys.eigenvalues[i] - lam0) * T);
  double v = acc * std::exp(-lam0 * T);
  return std::clamp(v, 0.0, 1.0);
}

double window_probability(const SpectralSystem& sys, double x, double T, double c) {
  require_t(T);
  if (!(c > 0.0)) throw std::invalid_argument("window length must be positive");
  double lam0 = sys.eigenvalues[0];
  double acc = 0.0;
  for (int i = 0; i < sys.n_modes(); ++i) {
    double lam = sys.eigenvalues[i];
    acc += sys.coeffs[i] * sys.mode_value(i, x) * std::exp(-(lam - lam0) * T) *
           -std::expm1(-lam * c);
  }
  double v = acc * std::exp(-lam0 * T);
  return std::clamp(v, 0.0, 1.0);
}

namespace {

// (W, dW/dx) with the common e^{-lambda_0 t} factored out; the ratio is what
// the drift needs, so the factor never matters.
void window_series(const SpectralSystem& sys, double x, double t, double c,
                   double& w_shifted, double& dw_shifted) {
  double lam0 = sys.eigenvalues[0];
  w_shifted = 0.0;
  dw_shifted = 0.0;
  for (int i = 0; i < sys.n_modes(); ++i) {
    double lam = sys.eigenvalues[i];
    double f = sys.coeffs[i] * std::exp(-(lam - lam0) * t) * -std::expm1(-lam * c);
    w_shifted += f * sys.mode_value(i, x);
    dw_shifted += f * sys.mode_deriv_value(i, x);
  }
}

}  // namespace

double conditioned_drift(const SpectralSystem& sys, double x, double time_to_T,
                         double c) {
  require_t(time_to_T);
  double w, dw;
  window_series(sys, x, time_to_T, c, w, dw);
  if (!(w > 0.0))
    throw std::runtime_error("conditioned_drift: window probability underflow");
  return sys.kappa.kappa * dw / w;
}

double error_term(const SpectralSystem& sys, double x, double time_to_T, double c) {
  require_t(time_to_T);
  double w, dw;
  window_series(sys, x, time_to_T, c, w, dw);
  if (!(w > 0.0))
    throw std::runtime_error("error_term: window probability underflow");
  double phi0 = sys.mode_value(0, x);
  double dphi0 = sys.mode_deriv_value(0, x);
  return dw / w - dphi0 / phi0;
}

DriftTable::DriftTable(const SpectralSystem& sys, double T, double c, double t_min,
                       double dt, int nx) {
  t_min_ = t_min;
  dt_ = dt;
  nx_ = nx;
  nt_ = std::max(2, static_cast<int>(std::ceil((T - t_min) / dt)) + 2);
  x_lo_ = sys.grid.front();
  x_hi_ = sys.grid.back();
  dx_ = (x_hi_ - x_lo_) / nx_;
  table_.resize(static_cast<std::size_t>(nt_) * nx_);
  for (int it = 0; it < nt_; ++it) {
    double t = t_min_ + it * dt_;
    for (int ix = 0; ix < nx_; ++ix) {
      double x = x_lo_ + (ix + 0.5) * dx_;  // offset keeps x = pi off-node
      double w, dw;
      window_series(sys, x, t, c, w, dw);
      double cot_half = std::cos(0.5 * x) / std::sin(0.5 * x);
      double drift = sys.kappa.kappa * dw / std::max(w, 1e-300);
      // bounded ratio: drift / cot(x/2); both vanish linearly at x = pi
      double r;
      if (std::abs(cot_half) > 1e-8) {
        r = drift / cot_half;
      } else {
        double x2 = x + 2e-4;
        double w2, dw2;
        window_series(sys, x2, t, c, w2, dw2);
        r = sys.kappa.kappa * dw2 / std::max(w2, 1e-300) /
            (std::cos(0.5 * x2) / std::sin(0.5 * x2));
      }
      table_[static_cast<std::size_t>(it) * nx_ + ix] = r;
    }
  }
}

double DriftTable::ratio(double x, double t) const {
  double fx = (std::clamp(x, x_lo_, x_hi_) - x_lo_) / dx_ - 0.5;
  double ft = (std::clamp(t, t_min_, t_min_ + (nt_ - 1) * dt_) - t_min_) / dt_;
  int ix = std::clamp(static_cast<int>(fx), 0, nx_ - 2);
  int it = std::clamp(static_cast<int>(ft), 0, nt_ - 2);
  double ax = std::clamp(fx - ix, 0.0, 1.0);
  double at = std::clamp(ft - it, 0.0, 1.0);
  const double* row0 = table_.data() + static_cast<std::size_t>(it) * nx_;
  const double* row1 = row0 + nx_;
  double v0 = row0[ix] * (1.0 - ax) + row0[ix + 1] * ax;
  double v1 = row1[ix] * (1.0 - ax) + row1[ix + 1] * ax;
  return v0 * (1.0 - at) + v1 * at;
}

namespace {

constexpr std::uint32_t kCacheVersion = 1;

void put_u32(std::ofstream& f, std::uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}
void put_f64(std::ofstream& f, double v) {
  f.write(reinterpret_cast<const char*>(&v), 8);
}
void put_vec(std::ofstream& f, const std::vector<double>& v) {
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * 8));
}

}  // namespace

void save_cache(const SpectralSystem& sys, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_cache: cannot open " + path);
  put_u32(f, kCacheVersion);
  put_u32(f, static_cast<std::uint32_t>(sys.n_nodes()));
  put_u32(f, static_cast<std::uint32_t>(sys.n_modes()));
  put_f64(f, sys.kappa.kappa);
  put_f64(f, sys.scale_2pi);
  put_vec(f, sys.grid);
  put_vec(f, sys.quad_w);
  put_vec(f, sys.speed);
  put_vec(f, sys.scale);
  put_vec(f, sys.scale_co);
  put_vec(f, sys.eigenvalues);
  put_vec(f, sys.coeffs);
  for (const auto& m : sys.modes) put_vec(f, m);
  for (const auto& m : sys.mode_deriv) put_vec(f, m);
}

std::optional<SpectralSystem> load_cache(const std::string& path, double kappa,
                                         int m_nodes) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return std::nullopt;
  auto get_u32 = [&]() {
    std::uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto get_f64 = [&]() {
    double v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  if (get_u32() != kCacheVersion) return std::nullopt;
  std::uint32_t M = get_u32(), nm = get_u32();
  double kap = get_f64();
  if (M != static_cast<std::uint32_t>(m_nodes) || kap != kappa) return std::nullopt;
  SpectralSystem sys;
  sys.kappa = core::KappaParams::make(kap);
  sys.scale_2pi = get_f64();
  auto get_vec = [&](std::vector<double>& v, std::size_t n) {
    v.resize(n);
    f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * 8));
  };
  get_vec(sys.grid, M);
  get_vec(sys.quad_w, M);
  get_vec(sys.speed, M);
  get_vec(sys.scale, M);
  get_vec(sys.scale_co, M);
  get_vec(sys.eigenvalues, nm);
  get_vec(sys.coeffs, nm);
  sys.modes.resize(nm);
  for (auto& m : sys.modes) get_vec(m, M);
  sys.mode_deriv.resize(nm);
  for (auto& m : sys.mode_deriv) get_vec(m, M);
  if (!f) return std::nullopt;
  return sys;
}

}  // namespace slegff::spectral
