#pragma once

#include <functional>

#include "core/autograd.h"
#include "core/config.h"

namespace gnvc {

// Truncated-path flow matching over latents.
//
// The refinement target x1 is the clean latent; the codec reconstruction is
// xc = x1 + e.  Sampling starts mid-path at
//     x_start = t_n * xc + (1 - t_n) * x0,        x0 ~ N(0, I)
// and follows the straight line to x1:
//     x_tau = u * x1 + (1 - u) * x_start,         u = (tau - t_n) / (1 - t_n)
// whose (constant) velocity is
//     v = (x1 - x0) - (t_n / (1 - t_n)) * (xc - x1).
// With e = 0 the correction term vanishes and this reduces to plain
// denoising from tau = t_n.  Euler integration with the exact constant
// velocity lands on x1 regardless of the step count.

struct FlowSchedule {
  double t_n = 0.7;
  int steps = 5;

  static FlowSchedule from(const Config &cfg) {
    FlowSchedule s;
    s.t_n = cfg.d("flow.t_n");
    s.steps = cfg.i("flow.steps");
    if (s.t_n <= 0 || s.t_n >= 1) throw Error(Status::config_error, "flow.t_n must be in (0,1)");
    if (s.steps < 1) throw Error(Status::config_error, "flow.steps must be >= 1");
    return s;
  }

  double dtau() const { return (1.0 - t_n) / steps; }
};

// Where sampling starts: the codec reconstruction renoised to level t_n.
template <class T>
Var<T> flow_start(const Var<T> &xc, const Var<T> &x0, double t_n) {
  return add_scaled(scale(xc, T(t_n)), x0, T(1.0 - t_n));
}

// Point on the truncated straight path at tau in [t_n, 1].
template <class T>
Var<T> flow_point(const Var<T> &x1, const Var<T> &x0, const Var<T> &xc, double t_n, double tau) {
  double u = (tau - t_n) / (1.0 - t_n);
  return add_scaled(scale(x1, T(u)), flow_start(xc, x0, t_n), T(1.0 - u));
}

// The constant target velocity along the truncated path.
template <class T>
Var<T> flow_target_velocity(const Var<T> &x1, const Var<T> &x0, const Var<T> &xc, double t_n) {
  auto base = sub(x1, x0);
  auto correction = scale(sub(xc, x1), T(t_n / (1.0 - t_n)));
  return sub(base, correction);
}

// Plain full-range linear path (used to pretrain the unconditional prior):
// x_tau = tau * x1 + (1 - tau) * x0, velocity x1 - x0.
template <class T>
Var<T> flow_point_full(const Var<T> &x1, const Var<T> &x0, double tau) {
  return add_scaled(scale(x1, T(tau)), x0, T(1.0 - tau));
}

// Euler sampler from x_start at tau = t_n to tau = 1.  The velocity field is
// a callback so tests can drive it with closed-form oracles and the harness
// with the learned model.
template <class T>
Var<T> flow_refine(const Var<T> &start, const FlowSchedule &sched,
                   const std::function<Var<T>(const Var<T> &, double)> &velocity) {
  auto x = start;
  const double dt = sched.dtau();
  for (int k = 0; k < sched.steps; ++k) {
    double tau = sched.t_n + k * dt;
    x = add_scaled(x, velocity(x, tau), T(dt));
  }
  return x;
}

} // namespace gnvc
