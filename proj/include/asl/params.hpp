#pragma once

#include <vector>

#include "asl/errors.hpp"

namespace asl {

/// Physical unknowns of the perfusion signal model. All times in ms;
/// cbf is a raw signal amplitude per ms (scaling constants to
/// physiological units are assumed known and folded away).
struct HaemodynamicParams {
    double cbf = 0.0;   // amplitude factor, a.u./ms
    double at = 0.0;    // bolus arrival time, ms
    double t1b = 0.0;   // blood longitudinal relaxation time, ms
    double tau = 900.0; // bolus duration, ms (fixed acquisition constant)

    /// Throws ConfigError on out-of-domain values. cbf == 0 is allowed
    /// (zero-perfusion voxels are a valid degenerate case); at, t1b and
    /// tau must be strictly positive.
    void validate() const;
};

/// Sampling times of the multi-delay acquisition.
struct AcquisitionSpec {
    std::vector<double> times; // ms, strictly increasing

    /// Default protocol: n points every `spacing` ms, first sample at `spacing`.
    static AcquisitionSpec standard(int n_points = 12, double spacing = 300.0);

    int n_points() const { return static_cast<int>(times.size()); }
    double last_time() const { return times.empty() ? 0.0 : times.back(); }

    void validate() const;
};

/// Steepness of the tanh blending that replaces the hard branch
/// transitions of the exact ODE. 1/ms; the transition region spans
/// roughly +/- 2.6/sharpness_k around each branch boundary.
struct SmoothingConfig {
    double sharpness_k = 0.05;

    void validate() const;
};

} // namespace asl
