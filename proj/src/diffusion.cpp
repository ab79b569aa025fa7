#include "slegff/diffusion.hpp"

#include <cmath>
#include <stdexcept>

#include "slegff/stats.hpp"

namespace slegff::diffusion {

void DiffusionConfig::validate() const {
  if (!(dt_base > 0.0 && dt_base <= 1e-2))
    throw std::invalid_argument("dt_base must lie in (0, 1e-2]");
  if (!(adapt_coeff > 0.0)) throw std::invalid_argument("adapt_coeff must be positive");
  if (!(alpha_floor > 0.0 && alpha_floor <= 1e-4))
    throw std::invalid_argument("alpha_floor must lie in (0, 1e-4]");
  if (!(exit_floor > 0.0 && exit_floor < alpha_floor))
    throw std::invalid_argument("exit_floor must lie in (0, alpha_floor)");
  if (!(max_time > 0.0)) throw std::invalid_argument("max_time must be positive");
}

namespace {

void require_alpha0(double alpha0) {
  if (!(alpha0 > 0.0 && alpha0 < 2.0 * M_PI))
    throw std::domain_error("alpha0 must lie in (0, 2pi)");
}

struct BaseCoeff {
  double value;
  double operator()(double, double) const { return value; }
};

}  // namespace

DiffusionPath simulate_exit(RandomStream& rng, double alpha0,
                            const DiffusionConfig& cfg) {
  cfg.validate();
  require_alpha0(alpha0);
  DiffusionPath out;
  out.alpha0 = alpha0;
  SdeState st{alpha0, 0.0, 0.0};
  BaseCoeff base{0.5 * (cfg.kappa.kappa - 4.0)};
  StopReason r = advance_sde(st, cfg, cfg.max_time, rng, base,
                             cfg.record_trace ? &out.trace : nullptr);
  out.tau = st.t;
  out.winding = st.winding;
  out.exit_side = (r == StopReason::exited_upper) ? ExitSide::upper : ExitSide::lower;
  out.timed_out = (r == StopReason::timed_out || r == StopReason::reached_time);
  return out;
}

ConditioningWindow ConditioningWindow::from_cr(double cr0, double epsilon, double C) {
  if (!(cr0 > 0.0 && epsilon > 0.0 && C > 1.0))
    throw std::invalid_argument("window requires cr0 > 0, epsilon > 0, C > 1");
  ConditioningWindow w;
  w.cr0 = cr0;
  w.epsilon = epsilon;
  w.C = C;
  w.T = std::log(cr0) + std::log(1.0 / epsilon) - std::log(C);
  w.c = std::log(C);
  if (!(w.T > 0.0)) throw std::invalid_argument("window start T must be positive");
  return w;
}

ConditioningWindow ConditioningWindow::from_time(double T, double c, double cr0) {
  if (!(T > 0.0 && c > 0.0)) throw std::invalid_argument("window requires T, c > 0");
  ConditioningWindow w;
  w.T = T;
  w.c = c;
  w.cr0 = cr0;
  w.C = std::exp(c);
  w.epsilon = cr0 * std::exp(-(T + c));
  return w;
}

double ConditioningWindow::cr_of_tau(double tau) const {
  return cr0 * std::exp(-tau);
}

ConditionedResult simulate_conditioned_rejection(RandomStream& rng, double alpha0,
                                                 const DiffusionConfig& cfg,
                                                 const ConditioningWindow& window,
                                                 double acceptance_hint) {
  cfg.validate();
  require_alpha0(alpha0);
  if (acceptance_hint >= 0.0 && acceptance_hint < 1e-6)
    throw std::runtime_error(
        "rejection acceptance below 1e-6; use the h-transform sampler");

  std::uint64_t max_attempts = 50'000'000;
  if (acceptance_hint > 0.0)
    max_attempts = static_cast<std::uint64_t>(2000.0 / acceptance_hint) + 1000;

  ConditionedResult res;
  BaseCoeff base{0.5 * (cfg.kappa.kappa - 4.0)};
  for (std::uint64_t a = 0; a < max_attempts; ++a) {
    SdeState st{alpha0, 0.0, 0.0};
    // paths that outlive the window are rejected as soon as that is known
    StopReason r = advance_sde(st, cfg, window.T + window.c, rng, base,
                               cfg.record_trace ? &res.path.trace : nullptr);
    ++res.attempts;
    if (r == StopReason::reached_time || r == StopReason::timed_out) {
      if (cfg.record_trace) res.path.trace.clear();
      continue;
    }
    if (window.contains_tau(st.t)) {
      res.path.alpha0 = alpha0;
      res.path.tau = st.t;
      res.path.winding = st.winding;
      res.path.exit_side =
          (r == StopReason::exited_upper) ? ExitSide::upper : ExitSide::lower;
      return res;
    }
    if (cfg.record_trace) res.path.trace.clear();
  }
  throw std::runtime_error("rejection sampler exhausted its attempt budget");
}

ConditionedResult simulate_conditioned_htransform(RandomStream& rng, double alpha0,
                                                  const DiffusionConfig& cfg,
                                                  const ConditioningWindow& window,
                                                  const spectral::SpectralSystem& sys,
                                                  const spectral::DriftTable& table) {
  cfg.validate();
  require_alpha0(alpha0);
  if (sys.n_nodes() < 2000)
    throw std::invalid_argument("h-transform sampler needs a spectral system with >= 2000 nodes");
  if (!(window.T > 1.0))
    throw std::invalid_argument("h-transform sampler needs T > 1; use rejection");

  const double t_switch = table.t_min();
  const double kappa = cfg.kappa.kappa;
  const double base = 0.5 * (kappa - 4.0);
  ConditionedResult res;

  for (int restart = 0; restart < 1000; ++restart) {
    // Phase 1: conditioned drift from the survival series, up to T - t_switch.
    SdeState st{alpha0, 0.0, 0.0};
    std::uint64_t clamps = 0;
    auto coeff = [&](double a, double s) {
      if (table.clamped(a)) ++clamps;
      return base + table.ratio(a, window.T - s);
    };
    StopReason r = advance_sde(st, cfg, window.T - t_switch, rng, coeff,
                               cfg.record_trace ? &res.path.trace : nullptr);
    res.drift_clamps += clamps;
    if (r != StopReason::reached_time) continue;  // numerical absorption; re-run

    // Phase 2: exact conditional tail by rejection from the reached state.
    for (int attempt = 0; attempt < 200'000; ++attempt) {
      ++res.attempts;
      SdeState tail = st;
      StopReason rt = advance_sde(tail, cfg, window.T + window.c, rng,
                                  BaseCoeff{base}, nullptr);
      if (rt == StopReason::exited_lower || rt == StopReason::exited_upper) {
        if (window.contains_tau(tail.t)) {
          res.path.alpha0 = alpha0;
          res.path.tau = tail.t;
          res.path.winding = tail.winding;
          res.path.exit_side =
              (rt == StopReason::exited_upper) ? ExitSide::upper : ExitSide::lower;
          return res;
        }
      }
    }
    throw std::runtime_error("h-transform tail rejection exhausted its budget");
  }
  throw std::runtime_error("h-transform phase 1 kept hitting the boundary");
}

WindingMomentResult winding_moment(RandomStream& rng, const DiffusionConfig& cfg,
                                   double lambda, const ConditioningWindow& window,
                                   std::uint64_t n_paths, double alpha0,
                                   SamplerKind kind,
                                   const spectral::SpectralSystem* sys,
                                   double lambda_max) {
  if (!(std::abs(lambda) <= lambda_max))
    throw std::invalid_argument("|lambda| exceeds the configured lambda_max");
  if (n_paths < 1000)
    throw std::invalid_argument("winding_moment requires n_paths >= 1e3");

  double acceptance = -1.0;
  if (sys && window.T > 0.5)
    acceptance = spectral::window_probability(*sys, alpha0, window.T, window.c);

  // Sampler selection: rejection for shallow windows (or when no spectral
  // system is available), h-transform for deep ones.
  if (kind == SamplerKind::automatic) {
    double est = acceptance >= 0.0 ? acceptance
                                   : std::exp(-cfg.kappa.lambda0 * window.T);
    kind = (est > 3e-3 || !sys || !(window.T > 1.0)) ? SamplerKind::rejection
                                                     : SamplerKind::htransform;
  }
  if (kind == SamplerKind::htransform && !sys)
    throw std::invalid_argument("h-transform winding_moment needs a spectral system");

  spectral::DriftTable table;
  if (kind == SamplerKind::htransform)
    table = spectral::DriftTable(*sys, window.T, window.c);

  Accumulator acc_e, acc_w;
  WindingMomentResult out;
  out.windings.reserve(n_paths);
  for (std::uint64_t i = 0; i < n_paths; ++i) {
    ConditionedResult r;
    if (kind == SamplerKind::rejection) {
      r = simulate_conditioned_rejection(rng, alpha0, cfg, window, acceptance);
    } else {
      r = simulate_conditioned_htransform(rng, alpha0, cfg, window, *sys, table);
    }
    out.n_attempts += r.attempts;
    double w = r.path.winding;
    acc_e.add(std::exp(lambda * w));
    acc_w.add(w);
    out.windings.push_back(w);
  }
  out.n_accepted = acc_e.n;
  if (out.n_accepted < 100)
    throw std::runtime_error("winding_moment: fewer than 100 accepted paths");
  out.moment = acc_e.mean();
  out.moment_stderr = acc_e.stderr_mean();
  out.mean_w = acc_w.mean();
  out.var_w = acc_w.variance();
  // variance-of-variance from normal theory; W is near-Gaussian here
  out.var_w_stderr = out.var_w * std::sqrt(2.0 / std::max<double>(1.0, acc_w.n - 1));
  return out;
}

}  // namespace slegff::diffusion
