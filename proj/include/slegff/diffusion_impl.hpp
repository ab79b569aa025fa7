#pragma once

#include <cmath>

namespace slegff::diffusion {

// Noise: object with .normal() and .uniform() (RandomStream qualifies; tests
// substitute coupled sources). CotCoeff: (alpha, t) -> multiplier of
// cot(alpha/2) in the drift; (k-4)/2 for the unconditioned process.
template <class Noise, class CotCoeff>
StopReason advance_sde(SdeState& st, const DiffusionConfig& cfg, double t_stop,
                       Noise&& noise, CotCoeff&& cot_coeff,
                       std::vector<std::pair<double, double>>* trace) {
  const double kappa = cfg.kappa.kappa;
  const double two_pi = 2.0 * M_PI;
  const double cot_floor =
      std::cos(0.5 * cfg.alpha_floor) / std::sin(0.5 * cfg.alpha_floor);
  double next_trace = st.t;

  for (;;) {
    double d_lo = st.alpha;
    double d_up = two_pi - st.alpha;
    if (std::min(d_lo, d_up) < cfg.exit_floor) {
      return d_lo <= d_up ? StopReason::exited_lower : StopReason::exited_upper;
    }
    if (st.t >= t_stop) return StopReason::reached_time;
    if (st.t >= cfg.max_time) return StopReason::timed_out;

    double d = std::min(d_lo, d_up);
    double dt = std::min(cfg.dt_base, cfg.adapt_coeff * d * d / kappa);
    if (st.t + dt > t_stop) dt = t_stop - st.t;
    if (!(dt > 0.0)) {
      st.t = t_stop;
      return StopReason::reached_time;
    }

    if (trace && st.t >= next_trace) {
      trace->emplace_back(st.t, st.alpha);
      next_trace = st.t + cfg.trace_stride;
    }

    double s_half = std::sin(0.5 * st.alpha);
    double c_half = std::cos(0.5 * st.alpha);
    double cot = c_half / s_half;
    // winding integrand, frozen once within alpha_floor of either end
    double cw = cot;
    if (d_lo < cfg.alpha_floor) {
      cw = cot_floor;
    } else if (d_up < cfg.alpha_floor) {
      cw = -cot_floor;
    }

    double z = noise.normal();
    double alpha_new =
        st.alpha + std::sqrt(kappa * dt) * z + cot_coeff(st.alpha, st.t) * cot * dt;

    if (alpha_new <= 0.0) {
      double frac = d_lo / (st.alpha - alpha_new);
      st.winding += cw * dt * frac;
      st.t += dt * frac;
      st.alpha = 0.0;
      return StopReason::exited_lower;
    }
    if (alpha_new >= two_pi) {
      double frac = d_up / (alpha_new - st.alpha);
      st.winding += cw * dt * frac;
      st.t += dt * frac;
      st.alpha = two_pi;
      return StopReason::exited_upper;
    }

    if (cfg.bridge_correction) {
      // Probability the piecewise-Brownian bridge touched a boundary inside a
      // step whose endpoints stayed interior. The nearer side is tested first
      // so that mirror-coupled paths make mirrored decisions.
      double e_near, e_far;
      bool lower_near = d_lo <= d_up;
      if (lower_near) {
        e_near = 2.0 * d_lo * alpha_new / (kappa * dt);
        e_far = 2.0 * d_up * (two_pi - alpha_new) / (kappa * dt);
      } else {
        e_near = 2.0 * d_up * (two_pi - alpha_new) / (kappa * dt);
        e_far = 2.0 * d_lo * alpha_new / (kappa * dt);
      }
      if (e_near < 30.0) {
        double p_near = std::exp(-e_near);
        double p_far = e_far < 30.0 ? std::exp(-e_far) : 0.0;
        double u = noise.uniform();
        if (u < p_near + p_far) {
          bool hit_lower = (u < p_near) ? lower_near : !lower_near;
          st.winding += cw * dt * 0.5;
          st.t += dt * 0.5;
          st.alpha = hit_lower ? 0.0 : two_pi;
          return hit_lower ? StopReason::exited_lower : StopReason::exited_upper;
        }
      }
    }

    st.winding += cw * dt;
    st.t += dt;
    st.alpha = alpha_new;
  }
}

}  // namespace slegff::diffusion
