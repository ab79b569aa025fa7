#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "slegff/core.hpp"
#include "slegff/rng.hpp"
#include "slegff/spectral.hpp"

namespace slegff::diffusion {

// Radial-angle diffusion  d a = sqrt(k) dB + ((k-4)/2) cot(a/2) ds  on
// (0, 2pi), absorbed at both ends.
struct DiffusionConfig {
  core::KappaParams kappa;
  double dt_base = 1e-3;
  double adapt_coeff = 0.04;  // dt = min(dt_base, adapt_coeff * d^2 / k), d = boundary distance
  double alpha_floor = 1e-6;  // winding integrand frozen below this distance
  double exit_floor = 1e-12;  // absorption declared below this distance
  double max_time = 1e4;
  bool bridge_correction = true;  // Brownian-bridge absorption on non-crossing steps
  bool record_trace = false;
  double trace_stride = 1e-2;

  void validate() const;  // throws on out-of-range settings
};

enum class ExitSide { lower, upper };

struct DiffusionPath {
  double alpha0 = 0.0;
  double tau = 0.0;
  double winding = 0.0;  // int_0^tau cot(a_s/2) ds
  ExitSide exit_side = ExitSide::lower;
  bool timed_out = false;  // max_time guard hit; path fields are partial
  std::vector<std::pair<double, double>> trace;  // (s, alpha) when recorded
};

DiffusionPath simulate_exit(RandomStream& rng, double alpha0,
                            const DiffusionConfig& cfg);

// Exit-time window (T, T+c], in exact correspondence with the conformal
// radius window CR in [eps, C*eps): T = log cr0 + log(1/eps) - log C, c = log C.
struct ConditioningWindow {
  double T = 0.0;
  double c = 0.0;
  double cr0 = 1.0;
  double epsilon = 0.0;
  double C = 1.0;

  static ConditioningWindow from_cr(double cr0, double epsilon, double C);
  static ConditioningWindow from_time(double T, double c, double cr0 = 1.0);
  bool contains_tau(double tau) const { return tau > T && tau <= T + c; }
  double cr_of_tau(double tau) const;
};

struct ConditionedResult {
  DiffusionPath path;
  std::uint64_t attempts = 0;      // paths (rejection) or tail attempts (h-transform)
  std::uint64_t drift_clamps = 0;  // h-transform drift evaluations clamped to grid edge
};

// Plain rejection. acceptance_hint, when >= 0, is checked against the 1e-6
// guard before any sampling; pass spectral::window_probability here.
ConditionedResult simulate_conditioned_rejection(RandomStream& rng, double alpha0,
                                                 const DiffusionConfig& cfg,
                                                 const ConditioningWindow& window,
                                                 double acceptance_hint = -1.0);

// Doob h-transform sampler: drift ((k-4)/2) cot + k d/dx log P(window) from
// the spectral survival series down to time-to-deadline 0.5, then the exact
// conditional tail by rejection from the reached state. Requires T > 1.
ConditionedResult simulate_conditioned_htransform(RandomStream& rng, double alpha0,
                                                  const DiffusionConfig& cfg,
                                                  const ConditioningWindow& window,
                                                  const spectral::SpectralSystem& sys,
                                                  const spectral::DriftTable& table);

enum class SamplerKind { rejection, htransform, automatic };

struct WindingMomentResult {
  double moment = 0.0;       // estimate of E[e^{lambda W} | tau in window]
  double moment_stderr = 0.0;
  double mean_w = 0.0;
  double var_w = 0.0;
  double var_w_stderr = 0.0;
  std::uint64_t n_accepted = 0;
  std::uint64_t n_attempts = 0;
  std::vector<double> windings;  // per accepted path, for cross-sampler tests
};

// n_paths accepted paths of the conditioned diffusion; |lambda| <= lambda_max.
WindingMomentResult winding_moment(RandomStream& rng, const DiffusionConfig& cfg,
                                   double lambda, const ConditioningWindow& window,
                                   std::uint64_t n_paths, double alpha0 = M_PI,
                                   SamplerKind kind = SamplerKind::automatic,
                                   const spectral::SpectralSystem* sys = nullptr,
                                   double lambda_max = 2.0);

// Internal stepper shared with tests that need coupled noise. Advances until
// absorption or s >= t_stop.
enum class StopReason { exited_lower, exited_upper, reached_time, timed_out };

struct SdeState {
  double alpha = 0.0;
  double t = 0.0;
  double winding = 0.0;
};

// CotCoeff: callable (alpha, t) -> multiplier of cot(alpha/2) in the drift;
// (k-4)/2 for the unconditioned process. Noise: callable () -> standard normal.
template <class Noise, class CotCoeff>
StopReason advance_sde(SdeState& st, const DiffusionConfig& cfg, double t_stop,
                       Noise&& normal, CotCoeff&& cot_coeff,
                       std::vector<std::pair<double, double>>* trace = nullptr);

}  // namespace slegff::diffusion

#include "slegff/diffusion_impl.hpp"
