#pragma once

#include <cstdint>
#include <vector>

#include "asl/tape.hpp"

namespace asl {

/// Fully connected 1 -> 32 -> 32 -> 1 network with tanh hidden units and
/// a hard initial-condition output transform:
///   s_hat(t) = s_norm * tanh(t / t_norm) * N(t / t_norm)
/// so the output is exactly zero at t = 0 for any weights. t_norm maps
/// the acquisition window onto roughly [0, 1]; s_norm restores raw
/// signal units.
class MlpPinn {
public:
    static constexpr int kHidden = 32;

    /// Glorot-uniform weight init (seeded), zero biases.
    MlpPinn(std::uint64_t seed, double t_norm, double s_norm);

    double forward(double t) const;

    /// Exact d s_hat / d t, tangent-propagated through the network and
    /// the output transform.
    double grad_wrt_time(double t) const;

    std::vector<double> forward_batch(const std::vector<double>& times) const;

    ad::Mat w1, b1; // 32x1, 32x1
    ad::Mat w2, b2; // 32x32, 32x1
    ad::Mat w3, b3; // 1x32, 1x1
    double t_norm;
    double s_norm;
};

/// Unconstrained trainables for the physical parameters, mapped to
/// positive physical values by value = scale * exp(raw). Scales are
/// chosen so raw = 0 at initialisation.
struct TrainablePhysical {
    double raw_cbf = 0.0;
    double raw_at = 0.0;
    double raw_t1b = 0.0;
    double cbf_scale = 1.0;
    double at_scale = 900.0;
    double t1b_scale = 1800.0;
    bool cbf_frozen = false;
    bool at_frozen = false;
    bool t1b_frozen = false;

    double cbf() const { return cbf_scale * std::exp(raw_cbf); }
    double at() const { return at_scale * std::exp(raw_at); }
    double t1b() const { return t1b_scale * std::exp(raw_t1b); }
};

} // namespace asl
