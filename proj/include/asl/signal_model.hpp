#pragma once

#include <vector>

#include "asl/params.hpp"

namespace asl {

/// Closed-form perfusion-weighted signal at time t (ms):
///   0                                   t <  at
///   cbf * (t - at) * exp(-t / t1b)      at <= t < at + tau
///   cbf * tau * exp(-t / t1b)           t >= at + tau
/// Continuous in t; the branch boundaries agree.
double evaluate_signal(const HaemodynamicParams& p, double t);

/// Branch-wise time derivative of the signal model. Discontinuous at
/// t = at and t = at + tau; the later branch's value is returned at the
/// boundary itself (right-continuous convention).
double evaluate_ode_rhs_exact(const HaemodynamicParams& p, double t);

/// Smooth replacement of the exact derivative:
///   g1(t) * B2(t) + g2(t) * B3(t)
/// where B2, B3 are the active branches of the exact derivative,
/// g1(t) = sig(t - at) * sig(at + tau - t), g2(t) = sig(t - at - tau)
/// and sig(x) = (1 + tanh(k x)) / 2. Infinitely differentiable in t and
/// in every parameter; converges to the exact derivative pointwise away
/// from the branch boundaries as k grows.
double evaluate_ode_rhs_smoothed(const HaemodynamicParams& p, double t,
                                 const SmoothingConfig& cfg);

/// Classical RK4 integration of the smoothed derivative from S(0) = 0.
/// Returns the integrated signal at each acquisition time. Each
/// inter-sample interval is covered with uniform sub-steps no longer
/// than `step_ms`. Throws ConfigError for step_ms <= 0 or
/// step_ms > sample spacing.
std::vector<double> integrate_smoothed_ode(const HaemodynamicParams& p,
                                           const SmoothingConfig& cfg,
                                           const AcquisitionSpec& spec,
                                           double step_ms);

} // namespace asl
