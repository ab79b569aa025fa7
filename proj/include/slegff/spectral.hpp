#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slegff/core.hpp"

namespace slegff::spectral {

// Scale function s(x) = int_0^x sin^{8/k-2}(u/2) du for 0 <= x <= 2pi.
// The integrand exponent is > -1 for every k in (0,8); k >= 8 is rejected.
double scale_function(double x, double kappa);
double scale_total(double kappa);  // s(2pi)

// Green's function of the killed diffusion, Eq. of the scale/speed pair:
// G(x,y) = s(min)(s(2pi)-s(max))/s(2pi). Symmetric, vanishes at 0 and 2pi.
double greens_function(double x, double y, double kappa);

// Everlasting-survival drift 2 cot(x/2), the large-window limit of the
// conditioned drift.
double drift_everlasting(double x);

// E_x[tau] = (2/k) int G(x,y) m(dy), by quadrature. The 2/k converts the
// d/dm d/ds Green's function to the generator's. Equals x(2pi-x)/k at k = 4.
double mean_exit_time(double kappa, double x);

// Discretization of the Green integral operator Gf(x) = int G(x,y) f(y) m(dy)
// on a graded midpoint grid. Eigenvalues are the generator's (time-decay)
// rates: lambda_i = (kappa/2) / theta_i with theta_i the operator eigenvalues,
// since the paper's G inverts d/dm d/ds and the generator is (k/2) d/dm d/ds.
struct SpectralSystem {
  core::KappaParams kappa;
  std::vector<double> grid;      // x_1..x_M, graded toward both endpoints
  std::vector<double> quad_w;    // midpoint weights
  std::vector<double> speed;     // m_i = sin^{2-8/k}(x_i/2)
  std::vector<double> scale;     // s(x_i)
  std::vector<double> scale_co;  // s(2pi) - s(x_i), accumulated from the right
  double scale_2pi = 0.0;

  std::vector<double> eigenvalues;             // ascending, lambda_0 first
  std::vector<std::vector<double>> modes;      // phi_i on the grid, L2(m)-normalized
  std::vector<std::vector<double>> mode_deriv; // phi_i' on the grid
  std::vector<double> coeffs;                  // c_i = int phi_i dm

  int n_nodes() const { return static_cast<int>(grid.size()); }
  int n_modes() const { return static_cast<int>(eigenvalues.size()); }

  // Interpolated mode values; outside the grid span the boundary power law
  // sin^{8/k-1}(x/2) is used, which is exact for phi_0.
  double mode_value(int i, double x) const;
  double mode_deriv_value(int i, double x) const;

  // max_i over grid of |phi_i/phi_0|, one entry per mode (boundary-growth
  // diagnostic).
  std::vector<double> boundary_growth_table() const;
};

struct EigenOptions {
  int n_modes = 0;       // 0 = automatic series cutoff
  double grading = 3.0;  // grid clustering power toward the endpoints
};

// Dense symmetric solve of the weighted kernel sqrt(m_i w_i) G sqrt(m_j w_j).
// Throws discretization_error if the leading operator eigenvalue is not
// positive. m_nodes >= 500 required.
SpectralSystem eigen_solve(double kappa, int m_nodes, EigenOptions opt = {});

// Survival series P_x(tau > T) = sum_i c_i phi_i(x) e^{-lambda_i T}.
// Only valid for T > 0.5 (uniform convergence floor); smaller T throws.
double survival_probability(const SpectralSystem& sys, double x, double T);

// P_x(tau in (T, T+c]); evaluated as one series with 1-e^{-lambda c} factors.
double window_probability(const SpectralSystem& sys, double x, double T, double c);

// Drift correction kappa * d/dx log P_x(c + t >= tau > t) at time-to-deadline
// t = time_to_T, and the error term  d/dx log W - d/dx log phi_0  whose decay
// in t the conditioned sampler relies on. time_to_T >= 0.5 required.
double conditioned_drift(const SpectralSystem& sys, double x, double time_to_T,
                         double c);
double error_term(const SpectralSystem& sys, double x, double time_to_T,
                  double c);

// Bounded-ratio drift table: total conditioned drift at (x, t) equals
// base_drift(x) + R(x,t) * cot(x/2) with R bounded and smooth; the table is
// what the h-transform sampler interpolates in its inner loop.
class DriftTable {
 public:
  DriftTable() = default;
  DriftTable(const SpectralSystem& sys, double T, double c, double t_min = 0.5,
             double dt = 0.02, int nx = 2048);

  // R(x,t); x clamped to table support (clamp events counted by caller).
  double ratio(double x, double t) const;
  bool clamped(double x) const { return x < x_lo_ || x > x_hi_; }
  double t_min() const { return t_min_; }

 private:
  double x_lo_ = 0.0, x_hi_ = 0.0, dx_ = 1.0;
  double t_min_ = 0.5, dt_ = 0.02;
  int nx_ = 0, nt_ = 0;
  std::vector<double> table_;  // nt x nx row-major
};

// Binary cache: header (version, kappa, M, n_modes) + little-endian float64
// arrays, row-major matrices.
void save_cache(const SpectralSystem& sys, const std::string& path);
std::optional<SpectralSystem> load_cache(const std::string& path, double kappa,
                                         int m_nodes);

}  // namespace slegff::spectral
