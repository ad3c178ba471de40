#pragma once

#include <cstdint>

#include "asl/grid.hpp"

namespace asl {

/// Synthetic dataset configuration. noise_std is expressed as a fraction
/// of the grid-wide peak noiseless signal (the model's absolute units
/// are arbitrary, so a relative noise scale keeps sweep levels
/// comparable across parameter fields).
struct PhantomConfig {
    int width = 4;
    int height = 4;
    double cbf_min = 0.005; // a.u./ms
    double cbf_max = 0.02;
    double at_min = 400.0; // ms
    double at_max = 1400.0;
    double t1b = 1800.0;            // ms, single global value
    double smoothness_voxels = 2.0; // Gaussian sigma of the field filter
    double noise_std = 0.0;         // fraction of peak noiseless signal
    std::uint64_t seed = 0;
    AcquisitionSpec spec = AcquisitionSpec::standard();

    void validate() const;
};

/// Generates a fully masked grid with spatially smooth CBF/AT fields
/// (low-pass filtered seeded random fields mapped into the configured
/// ranges), a single global t1b, noiseless signals from the closed-form
/// model, and additive white Gaussian noise. Ground truth is populated.
/// Deterministic for a fixed seed.
VoxelGrid generate_phantom(const PhantomConfig& cfg);

} // namespace asl
