#include "slegff/field.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace slegff::field {

namespace {

// c(u) = (1/2pi) int_0^{2pi} log+ |u - e^{i phi}| dphi on [0,2], tabulated once.
// c(0) = 0, c(2) = log 2; for u >= 2 the average is exactly log u.
struct OverlapTable {
  static constexpr int kN = 4096;
  double v[kN + 1];
  OverlapTable() {
    for (int i = 0; i <= kN; ++i) {
      double u = 2.0 * i / kN;
      const int q = 2048;
      double s = 0.0;
      for (int k = 0; k < q; ++k) {
        double phi = (k + 0.5) * M_PI / q;  // integrand symmetric in phi
        double rho2 = u * u - 2.0 * u * std::cos(phi) + 1.0;
        if (rho2 > 1.0) s += 0.5 * std::log(rho2);
      }
      v[i] = s / q;
    }
  }
  double operator()(double u) const {
    if (u <= 0.0) return 0.0;
    if (u >= 2.0) return std::log(u);
    double f = u * (kN / 2.0);
    int i = static_cast<int>(f);
    if (i >= kN) i = kN - 1;
    double a = f - i;
    return v[i] * (1.0 - a) + v[i + 1] * a;
  }
};

const OverlapTable& overlap() {
  static OverlapTable t;
  return t;
}

double disc_tilde_g(complex x, complex y) {
  return std::log(std::abs(1.0 - std::conj(x) * y));
}

}  // namespace

double circle_average_log_kernel(double r, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
  if (r >= 2.0 * delta) return -std::log(r);
  return -std::log(delta) - overlap()(r / delta);
}

std::vector<complex> FieldGrid::centers() const {
  std::vector<complex> out;
  out.reserve(cells.size());
  for (const auto& c : cells) out.push_back(c.center(region));
  return out;
}

FieldGrid disc_grid(int level) {
  FieldGrid g;
  g.region = {-1.0, -1.0, 2.0};
  g.level = level;
  double d = g.delta();
  std::int64_t n = std::int64_t{1} << level;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      core::DyadicSquare s{level, i, j};
      complex z = s.center(g.region);
      if (std::abs(z) < 1.0 - d) g.cells.push_back(s);
    }
  }
  return g;
}

FieldGrid cells_grid(const core::Region& region, int level,
                     std::vector<core::DyadicSquare> cells) {
  FieldGrid g;
  g.region = region;
  g.level = level;
  g.cells = std::move(cells);
  return g;
}

double CovarianceModel::kernel(int i, int j) const {
  if (i == j) return -std::log(delta) + log_cr[i];
  double r = std::abs(points[i] - points[j]);
  double tg;
  if (domain == Domain::unit_disc) {
    tg = disc_tilde_g(points[i], points[j]);
  } else {
    tg = loewner::greens_slit(mapped[i], mapped[j]) + std::log(r);
  }
  return circle_average_log_kernel(r, delta) + tg;
}

void CovarianceModel::factorize() {
  const int n = n_points();
  Eigen::MatrixXd K(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) K(i, j) = K(j, i) = kernel(i, j);

  for (double jit : {0.0, 1e-12, 1e-10}) {
    Eigen::MatrixXd Kj = K;
    if (jit > 0.0) Kj.diagonal().array() += jit;
    Eigen::LLT<Eigen::MatrixXd> llt(Kj);
    if (llt.info() == Eigen::Success) {
      jitter_ = jit;
      chol_.assign(static_cast<std::size_t>(n) * n, 0.0);
      Eigen::MatrixXd L = llt.matrixL();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) chol_[static_cast<std::size_t>(i) * n + j] = L(i, j);
      return;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K, Eigen::EigenvaluesOnly);
  char msg[128];
  std::snprintf(msg, sizeof msg,
                "covariance factorization failed; smallest eigenvalue %.3e",
                es.eigenvalues().minCoeff());
  throw std::runtime_error(msg);
}

std::vector<double> CovarianceModel::sample(RandomStream& rng) const {
  if (chol_.empty()) throw std::logic_error("covariance model not factorized");
  const int n = n_points();
  std::vector<double> z(n), h(n, 0.0);
  for (int i = 0; i < n; ++i) z[i] = rng.normal();
  for (int i = 0; i < n; ++i) {
    const double* row = chol_.data() + static_cast<std::size_t>(i) * n;
    double acc = 0.0;
    for (int j = 0; j <= i; ++j) acc += row[j] * z[j];
    h[i] = acc;
  }
  return h;
}

namespace {

constexpr int kMaxPoints = 96 * 96;

void check_budget(std::size_t n) {
  if (n > kMaxPoints)
    throw std::invalid_argument("field grids are capped at 96^2 points");
  if (n == 0) throw std::invalid_argument("field grid is empty");
}

}  // namespace

CovarianceModel make_disc_model(std::vector<complex> points, double delta) {
  check_budget(points.size());
  CovarianceModel m;
  m.domain = Domain::unit_disc;
  m.delta = delta;
  m.points = std::move(points);
  m.log_cr.reserve(m.points.size());
  m.near_boundary.reserve(m.points.size());
  for (auto z : m.points) {
    double cr = 1.0 - std::norm(z);
    if (!(cr > 0.0)) throw std::domain_error("disc model point outside the unit disc");
    m.log_cr.push_back(std::log(cr));
    m.near_boundary.push_back(cr < 4.0 * delta ? 1 : 0);
  }
  m.factorize();
  return m;
}

CovarianceModel make_slit_model(const loewner::DrivingPath& driving,
                                std::vector<complex> points, double delta,
                                const loewner::EvolveOptions& opt) {
  return make_slit_model(std::span<const loewner::DrivingPath>{&driving, 1},
                         std::move(points), delta, opt);
}

CovarianceModel make_slit_model(std::span<const loewner::DrivingPath> segments,
                                std::vector<complex> points, double delta,
                                const loewner::EvolveOptions& opt) {
  check_budget(points.size());
  CovarianceModel m;
  m.domain = Domain::half_plane_slit;
  m.delta = delta;
  m.points = std::move(points);
  auto batch = loewner::make_batch(m.points);
  loewner::EvolveOptions eo = opt;
  eo.kernel_safe = true;
  loewner::evolve_batch(batch, segments, eo);
  m.mapped.resize(m.points.size());
  m.log_cr.resize(m.points.size());
  m.near_boundary.resize(m.points.size());
  for (std::size_t i = 0; i < m.points.size(); ++i) {
    if (batch.swallowed(i))
      throw std::runtime_error("slit covariance: evaluation point was swallowed");
    m.mapped[i] = {batch.g_re[i], batch.g_im[i]};
    double cr = batch.cr(i);
    m.log_cr[i] = std::log(cr);
    m.near_boundary[i] = cr < 4.0 * delta ? 1 : 0;
  }
  m.factorize();
  return m;
}

CovarianceModel make_slit_model_prepared(std::vector<complex> points,
                                         std::vector<complex> mapped,
                                         std::vector<double> log_cr, double delta) {
  check_budget(points.size());
  if (points.size() != mapped.size() || points.size() != log_cr.size())
    throw std::invalid_argument("prepared slit model: size mismatch");
  CovarianceModel m;
  m.domain = Domain::half_plane_slit;
  m.delta = delta;
  m.points = std::move(points);
  m.mapped = std::move(mapped);
  m.log_cr = std::move(log_cr);
  m.near_boundary.resize(m.points.size());
  for (std::size_t i = 0; i < m.points.size(); ++i)
    m.near_boundary[i] = m.log_cr[i] < std::log(4.0 * delta) ? 1 : 0;
  m.factorize();
  return m;
}

double covariance_disc(complex x, complex y, double delta) {
  double r = std::abs(x - y);
  if (r == 0.0) {
    double cr = 1.0 - std::norm(x);
    return -std::log(delta) + std::log(cr);
  }
  return circle_average_log_kernel(r, delta) + disc_tilde_g(x, y);
}

double covariance_slit(const loewner::DrivingPath& driving, complex x, complex y,
                       double delta) {
  std::vector<complex> pts{x, y};
  auto batch = loewner::make_batch(pts);
  loewner::EvolveOptions eo;
  eo.kernel_safe = true;
  loewner::evolve_batch(batch, driving, eo);
  if (batch.swallowed(0) || batch.swallowed(1))
    throw std::runtime_error("slit covariance: evaluation point was swallowed");
  complex gx{batch.g_re[0], batch.g_im[0]}, gy{batch.g_re[1], batch.g_im[1]};
  double r = std::abs(x - y);
  if (r == 0.0) return -std::log(delta) + std::log(batch.cr(0));
  return circle_average_log_kernel(r, delta) + loewner::greens_slit(gx, gy) +
         std::log(r);
}

CircleAverageField sample_field(RandomStream& rng, const FieldGrid& grid,
                                const CovarianceModel& model) {
  if (static_cast<std::size_t>(model.n_points()) != grid.cells.size())
    throw std::invalid_argument("model and grid sizes differ");
  CircleAverageField f;
  f.grid = grid;
  f.values = model.sample(rng);
  return f;
}

double MeasureGrid::total_mass() const {
  double s = 0.0;
  for (double m : mass) s += m;
  return s;
}

MeasureGrid liouville_masses(const CircleAverageField& field,
                             const core::GammaParams& gamma) {
  MeasureGrid out;
  out.level = field.grid.level;
  out.cells = field.grid.cells;
  double d = field.grid.delta();
  double pre = std::pow(d, gamma.gamma_sq_half) * d * d;
  out.mass.reserve(field.values.size());
  for (double h : field.values) out.mass.push_back(pre * std::exp(gamma.gamma * h));
  return out;
}

MeasureGrid winding_weighted_masses(const MeasureGrid& measure,
                                    const std::vector<double>& windings,
                                    const core::KappaParams& kappa,
                                    const core::GammaParams& gamma) {
  if (windings.size() != measure.mass.size())
    throw std::invalid_argument("winding missing for some cells");
  MeasureGrid out = measure;
  out.weighted_mass.resize(measure.mass.size());
  double gc = gamma.gamma * kappa.chi;
  for (std::size_t i = 0; i < measure.mass.size(); ++i) {
    if (!std::isfinite(windings[i]))
      throw std::invalid_argument("winding missing for some cells");
    out.weighted_mass[i] = measure.mass[i] * std::exp(-gc * windings[i]);
  }
  return out;
}

void export_csv(const std::string& path, const CircleAverageField& field,
                const MeasureGrid& measure) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("export_csv: cannot open " + path);
  f << "i,j,h,mu,mu_weighted\n";
  char buf[160];
  for (std::size_t k = 0; k < field.grid.cells.size(); ++k) {
    const auto& c = field.grid.cells[k];
    double mw = measure.weighted_mass.empty() ? measure.mass[k]
                                              : measure.weighted_mass[k];
    std::snprintf(buf, sizeof buf, "%lld,%lld,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(c.i), static_cast<long long>(c.j),
                  field.values[k], measure.mass[k], mw);
    f << buf;
  }
}

}  // namespace slegff::field
