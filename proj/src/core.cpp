#include "slegff/core.hpp"

#include <cmath>
#include <stdexcept>

namespace slegff::core {

KappaParams KappaParams::make(double kappa) {
  if (!(kappa > 0.0 && kappa < 8.0))
    throw std::domain_error("kappa must lie in (0,8)");
  KappaParams p;
  p.kappa = kappa;
  double rk = std::sqrt(kappa);
  p.chi = 2.0 / rk - rk / 2.0;
  p.boundary_height = M_PI / rk;
  p.sle_dim = 1.0 + kappa / 8.0;
  p.lambda0 = 1.0 - kappa / 8.0;
  p.speed_exponent = 2.0 - 8.0 / kappa;
  return p;
}

GammaParams GammaParams::make(double gamma) {
  if (!(gamma >= 0.0 && gamma < 2.0))
    throw std::domain_error("gamma must lie in [0,2)");
  GammaParams g;
  g.gamma = gamma;
  g.gamma_sq_half = 0.5 * gamma * gamma;
  return g;
}

namespace {

// Smaller root of (c/2) q^2 - a q + d = 0 in the numerically stable form
// q = 2d / (a + sqrt(a^2 - 2 c d)); exact linear limit at c = 0.
double stable_small_root(double a, double c, double d) {
  double disc = a * a - 2.0 * c * d;
  if (disc < 0.0) throw std::domain_error("no real root in [0,1]");
  return 2.0 * d / (a + std::sqrt(disc));
}

}  // namespace

double kpz_forward(double q, const GammaParams& g) {
  if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("quantum dim outside [0,1]");
  return (2.0 + g.gamma_sq_half) * q - g.gamma_sq_half * q * q;
}

double kpz_inverse(double d, const GammaParams& g) {
  if (!(d >= 0.0 && d <= 2.0)) throw std::domain_error("euclidean dim outside [0,2]");
  return stable_small_root(2.0 + g.gamma_sq_half, 2.0 * g.gamma_sq_half, d);
}

double kpz_ds_forward(double delta, const GammaParams& g) {
  if (!(delta >= 0.0 && delta <= 1.0))
    throw std::domain_error("quantum exponent outside [0,1]");
  return (2.0 - g.gamma_sq_half) * delta + g.gamma_sq_half * delta * delta;
}

double kpz_ds_inverse(double x, const GammaParams& g) {
  if (!(x >= 0.0 && x <= 2.0)) throw std::domain_error("scaling exponent outside [0,2]");
  // (g^2/2) D^2 + b D - x = 0 with b = 2 - g^2/2; positive root.
  double b = 2.0 - g.gamma_sq_half;
  return 2.0 * x / (b + std::sqrt(b * b + 4.0 * g.gamma_sq_half * x));
}

double flowline_forward(double q, const KappaParams& k, const GammaParams& g) {
  if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("quantum dim outside [0,1]");
  double f = 1.0 - k.kappa / 4.0;
  double coeff = g.gamma_sq_half * f * f;
  return (2.0 + g.gamma_sq_half) * q - coeff * q * q;
}

double flowline_inverse(double d, const KappaParams& k, const GammaParams& g) {
  if (!(d >= 0.0 && d <= 2.0)) throw std::domain_error("euclidean dim outside [0,2]");
  double f = 1.0 - k.kappa / 4.0;
  return stable_small_root(2.0 + g.gamma_sq_half,
                           2.0 * g.gamma_sq_half * f * f, d);
}

double DyadicSquare::side(const Region& r) const {
  return r.size * std::ldexp(1.0, -level);
}

complex DyadicSquare::corner(const Region& r) const {
  double s = side(r);
  return {r.x0 + static_cast<double>(i) * s, r.y0 + static_cast<double>(j) * s};
}

complex DyadicSquare::center(const Region& r) const {
  double s = side(r);
  complex c = corner(r);
  return {c.real() + 0.5 * s, c.imag() + 0.5 * s};
}

bool DyadicSquare::contains(const Region& r, complex z) const {
  complex c = corner(r);
  double s = side(r);
  return z.real() >= c.real() && z.real() <= c.real() + s &&
         z.imag() >= c.imag() && z.imag() <= c.imag() + s;
}

std::vector<DyadicSquare> DyadicSquare::children() const {
  std::vector<DyadicSquare> out;
  out.reserve(4);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      out.push_back({level + 1, 2 * i + a, 2 * j + b});
  return out;
}

DyadicSquare cell_of(const Region& r, complex z, int level) {
  double s = r.size * std::ldexp(1.0, -level);
  auto clampi = [&](double v) {
    auto idx = static_cast<std::int64_t>(std::floor(v));
    std::int64_t n = static_cast<std::int64_t>(1) << level;
    if (idx < 0) idx = 0;
    if (idx >= n) idx = n - 1;
    return idx;
  };
  return {level, clampi((z.real() - r.x0) / s), clampi((z.imag() - r.y0) / s)};
}

}  // namespace slegff::core
