#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "slegff/core.hpp"
#include "slegff/loewner.hpp"
#include "slegff/rng.hpp"

namespace slegff::field {

using core::complex;

// Short-distance part of the circle-average covariance: the exact two-circle
// average of log 1/|x-y|, which equals log 1/(delta v r) for r >= 2 delta and
// log(1/delta) at r = 0, with a smooth overlap correction in between (the
// bare capped formula is not positive semidefinite on cell-center grids).
double circle_average_log_kernel(double r, double delta);

// Dyadic-cell sampling layout: one sample point per cell, at the center;
// delta = cell side.
struct FieldGrid {
  core::Region region;
  int level = 0;
  std::vector<core::DyadicSquare> cells;

  double delta() const { return region.size * std::ldexp(1.0, -level); }
  std::vector<complex> centers() const;
};

// All level-n cells of [-1,1]^2 whose center lies in the unit disc at
// distance > delta from its boundary.
FieldGrid disc_grid(int level);

FieldGrid cells_grid(const core::Region& region, int level,
                     std::vector<core::DyadicSquare> cells);

enum class Domain { unit_disc, half_plane_slit };

// Covariance model over a fixed point set: kernel(x,y) = circle-average log
// kernel + tildeG(x,y), where tildeG is log|1 - conj(x) y| in the disc and
// comes through the Loewner map by conformal invariance in a slit half-plane.
class CovarianceModel {
 public:
  Domain domain = Domain::unit_disc;
  double delta = 0.0;
  std::vector<complex> points;
  std::vector<complex> mapped;        // g(x_i) for the slit domain
  std::vector<double> log_cr;         // log CR(x_i, domain)
  std::vector<std::uint8_t> near_boundary;  // CR < 4 delta

  int n_points() const { return static_cast<int>(points.size()); }
  double kernel(int i, int j) const;

  // Cholesky factor of the kernel matrix (+ diagonal jitter if needed).
  void factorize();
  bool factorized() const { return !chol_.empty(); }
  double jitter_used() const { return jitter_; }

  std::vector<double> sample(RandomStream& rng) const;

 private:
  std::vector<double> chol_;  // row-major lower triangle, full n x n storage
  double jitter_ = 0.0;
};

CovarianceModel make_disc_model(std::vector<complex> points, double delta);
CovarianceModel make_slit_model(const loewner::DrivingPath& driving,
                                std::vector<complex> points, double delta,
                                const loewner::EvolveOptions& opt = {});
CovarianceModel make_slit_model(std::span<const loewner::DrivingPath> segments,
                                std::vector<complex> points, double delta,
                                const loewner::EvolveOptions& opt = {});

// From already-evolved map data (g images and log CR per point); callers that
// batch many models over one chain avoid re-running the chain.
CovarianceModel make_slit_model_prepared(std::vector<complex> points,
                                         std::vector<complex> mapped,
                                         std::vector<double> log_cr, double delta);

// Standalone kernel evaluation (spec surface); for the slit domain the two
// points are evolved through the chain on demand.
double covariance_disc(complex x, complex y, double delta);
double covariance_slit(const loewner::DrivingPath& driving, complex x, complex y,
                       double delta);

struct CircleAverageField {
  FieldGrid grid;
  std::vector<double> values;  // h_delta at the cell centers
};

// Exact Gaussian vector with the model covariance; model must cover the
// grid's centers in order (points.size() == cells.size()).
CircleAverageField sample_field(RandomStream& rng, const FieldGrid& grid,
                                const CovarianceModel& model);

struct MeasureGrid {
  int level = 0;
  std::vector<core::DyadicSquare> cells;
  std::vector<double> mass;           // mu(S)
  std::vector<double> weighted_mass;  // mu~(S); empty unless built
  double total_mass() const;
};

// mu(S_i) = delta^{gamma^2/2} e^{gamma h_i} delta^2.
MeasureGrid liouville_masses(const CircleAverageField& field,
                             const core::GammaParams& gamma);

// mu~(S) = mu(S) e^{-gamma chi w(center)}; windings must be supplied (and
// finite) for every cell.
MeasureGrid winding_weighted_masses(const MeasureGrid& measure,
                                    const std::vector<double>& windings,
                                    const core::KappaParams& kappa,
                                    const core::GammaParams& gamma);

// Snapshot rows (i, j, h, mu, mu~) for plotting.
void export_csv(const std::string& path, const CircleAverageField& field,
                const MeasureGrid& measure);

}  // namespace slegff::field
