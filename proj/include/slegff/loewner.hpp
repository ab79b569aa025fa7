#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slegff/core.hpp"
#include "slegff/rng.hpp"

namespace slegff::loewner {

using core::complex;

// Piecewise-constant (midpoint value) driving for the chordal Loewner chain,
// zeta_k = sqrt(kappa) B_{k dt}.
struct DrivingPath {
  double dt = 0.0;
  double kappa = 0.0;
  std::vector<double> values;     // zeta at t = k dt; values[0] = 0
  std::vector<double> midpoints;  // per-step constant driving value
  std::vector<double> suffix_min; // envelope of values[k..], for freezing
  std::vector<double> suffix_max;

  int n_steps() const { return static_cast<int>(midpoints.size()); }
  double t_max() const { return dt * n_steps(); }
  void finalize();  // fills midpoints and suffix envelopes from values
};

DrivingPath sample_driving(RandomStream& rng, double kappa, double t_max, double dt);

enum class PointState : std::uint8_t { alive = 0, frozen = 1, swallowed = 2 };

// Interior point carried through the chain: image g_t(z0), accumulated
// log g_t'(z0) (winding = Im, conformal radius = 2 Im g e^{-Re}).
struct TrackedPoint {
  complex z0;
  complex g;
  complex log_deriv;
  PointState state = PointState::alive;
  double swallow_time = -1.0;
  double stopped_winding = 0.0;
  double stopped_cr = 0.0;

  double cr() const;       // current while alive, stopped otherwise
  double winding() const;  // Im log_deriv while alive, stopped otherwise
  bool alive() const { return state == PointState::alive; }
};

TrackedPoint make_point(complex z0);

struct EvolveOptions {
  double swallow_eps_factor = 1e-9;  // swallow_eps = factor * sqrt(max(1, t_max))
  double freeze_tol = 1e-3;          // <= 0 disables freezing
  int freeze_stride = 32;            // steps between freeze checks
  // Also require the mapped point itself (not just CR and winding) to be
  // final within tolerance; needed when g feeds the slit-domain Green kernel.
  bool kernel_safe = false;
};

// Advance points through driving steps [k_from, k_to). Points update
// independently; swallowed points keep their prior-step stopped values
// (the k > 4 limit semantics).
void evolve(std::span<TrackedPoint> points, const DrivingPath& driving, int k_from,
            int k_to, const EvolveOptions& opt = {});

// Structure-of-arrays variant for large scans; runs the whole driving.
struct PointBatch {
  std::vector<complex> z0;
  std::vector<double> g_re, g_im;    // current image
  std::vector<double> ld_re, ld_im;  // accumulated log-derivative
  std::vector<PointState> state;
  std::vector<double> stop_cr, stop_winding, swallow_t;

  std::size_t size() const { return z0.size(); }
  double cr(std::size_t i) const;
  double winding(std::size_t i) const;
  bool swallowed(std::size_t i) const { return state[i] == PointState::swallowed; }
};

PointBatch make_batch(std::span<const complex> pts);
void evolve_batch(PointBatch& batch, const DrivingPath& driving,
                  const EvolveOptions& opt = {});

// Consecutive driving segments of one Brownian path, usually fine steps while
// the curve crosses the region of interest and coarser steps afterwards.
// Freezing only applies inside the final segment.
void evolve_batch(PointBatch& batch, std::span<const DrivingPath> segments,
                  const EvolveOptions& opt = {});

// Brownian driving split at t_fine: step dt_fine on [0, t_fine], dt_coarse on
// [t_fine, t_max].
std::vector<DrivingPath> sample_tiered_driving(RandomStream& rng, double kappa,
                                               double t_fine, double dt_fine,
                                               double t_max, double dt_coarse);

// Direct conditioned-winding estimator: evolve z0 until its conformal radius
// leaves the window [eps, C eps) from above or below, the point is swallowed,
// or capacity t_max is exhausted. hit means the final conformal radius landed
// in the window (for k > 4, the stopped value at the swallow time).
struct CrRun {
  double winding = 0.0;
  double cr = 0.0;
  bool hit = false;
  bool swallowed = false;
  double capacity = 0.0;  // capacity time consumed
};

CrRun run_until_cr(RandomStream& rng, double kappa, complex z0, double eps, double C,
                   double dt, double t_max);

// Winding at the first time CR drops to cr_level (log-CR interpolated across
// the crossing step); nullopt if the level is not reached by t_max.
std::optional<double> winding_at_cr_level(RandomStream& rng, double kappa, complex z0,
                                          double cr_level, double dt, double t_max);

// Curve tip gamma(t_k) by inverse slit-map composition, every `stride` steps.
// O(K^2 / stride); diagnostic use.
std::vector<complex> trace_tip(const DrivingPath& driving, int stride);

// log|g(x) - conj(g(y))| - log|g(x) - g(y)| from final images; the slit-domain
// Green's function by conformal invariance.
double greens_slit(complex gx, complex gy);

// CSV trace dump: t, zeta, and per-point Im g / winding / CR rows.
void dump_trace_csv(const std::string& path, const DrivingPath& driving,
                    std::span<const complex> points, int stride,
                    const EvolveOptions& opt = {});

}  // namespace slegff::loewner
