#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace slegff::core {

using complex = std::complex<double>;

// Fixed SLE parameter and every constant derived from it. All fields are pure
// functions of kappa; recomputing and comparing must match bit for bit.
struct KappaParams {
  double kappa = 0.0;
  double chi = 0.0;              // 2/sqrt(k) - sqrt(k)/2
  double boundary_height = 0.0;  // pi/sqrt(k)
  double sle_dim = 0.0;          // 1 + k/8
  double lambda0 = 0.0;          // 1 - k/8, leading survival rate
  double speed_exponent = 0.0;   // 2 - 8/k, exponent of the speed density

  static KappaParams make(double kappa);  // throws std::domain_error outside (0,8)
};

struct GammaParams {
  double gamma = 0.0;
  double gamma_sq_half = 0.0;

  static GammaParams make(double gamma);  // throws outside [0,2)
};

// One row of the calculator table: both KPZ conventions plus the flow-line
// variant, kept together for reporting.
struct KpzQuery {
  double euclidean_dim = 0.0;      // d in [0,2]
  double quantum_dim = 0.0;        // q in [0,1]
  double ds_scaling_exponent = 0.0;  // x
  double ds_quantum_exponent = 0.0;  // Delta in [0,1]
};

// d = (2 + g^2/2) q - (g^2/2) q^2     (expected-Minkowski / Hausdorff form)
double kpz_forward(double q, const GammaParams& g);
double kpz_inverse(double d, const GammaParams& g);

// x = (2 - g^2/2) D + (g^2/2) D^2     (Duplantier-Sheffield scaling exponents)
double kpz_ds_forward(double delta, const GammaParams& g);
double kpz_ds_inverse(double x, const GammaParams& g);

// d = (2 + g^2/2) q - g^2 (1 - k/4)^2 q^2 / 2   (flow-line relation)
double flowline_forward(double q, const KappaParams& k, const GammaParams& g);
double flowline_inverse(double d, const KappaParams& k, const GammaParams& g);

// Axis-aligned square region [x0, x0+size] x [y0, y0+size] that anchors all
// dyadic indexing. Level-n cells have side size * 2^-n.
struct Region {
  double x0 = 0.0;
  double y0 = 0.0;
  double size = 1.0;
};

struct DyadicSquare {
  int level = 0;
  std::int64_t i = 0;
  std::int64_t j = 0;

  double side(const Region& r) const;
  complex center(const Region& r) const;
  complex corner(const Region& r) const;  // lower-left
  bool contains(const Region& r, complex z) const;
  std::vector<DyadicSquare> children() const;
};

// The level-n cell containing z; z must lie in the region.
DyadicSquare cell_of(const Region& r, complex z, int level);

}  // namespace slegff::core
