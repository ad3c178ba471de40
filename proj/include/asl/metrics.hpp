#pragma once

#include <optional>
#include <string>
#include <vector>

#include "asl/grid.hpp"

namespace asl {

/// (predicted - target) / target * 100. Throws MetricError when the
/// target is zero (the caller excludes and counts such voxels).
double relative_error(double predicted, double target);

/// Divergence audit at the training horizon: an estimate more than one
/// order of magnitude away from truth has failed to converge.
bool convergence_failed(double cbf_estimate, double cbf_truth);

/// Variance of the 5-point discrete Laplacian over voxels whose full
/// 4-neighbourhood lies inside the mask. Population variance; a single
/// interior voxel yields 0. Throws MetricError when no interior voxel
/// exists.
double laplacian_variance(const std::vector<double>& map,
                          const std::vector<std::uint8_t>& mask, int width,
                          int height);

/// Mean squared difference between two equal-length series.
double signal_mse(const std::vector<double>& predicted,
                  const std::vector<double>& reference);

struct Stats {
    double mean = 0.0;
    double stddev = 0.0; // population convention
    int count = 0;
};

Stats mean_std(const std::vector<double>& values);

/// One voxel's estimation outcome as consumed by the report.
struct VoxelEstimate {
    int index = -1; // row-major position
    bool fitted = false;
    double cbf = 0.0;
    double at = 0.0;
    std::optional<double> t1b; // absent when not estimated (fixed-t1b LSF)
    std::vector<double> predicted_signal;
};

/// Aggregate evaluation statistics against a grid's ground truth,
/// following the evaluation protocol: voxels whose CBF estimate fails
/// the order-of-magnitude audit are excluded from the relative-error
/// and Laplacian statistics.
struct MetricsReport {
    std::string method;
    int n_voxels = 0;      // masked voxels with a fitted estimate
    int n_failed = 0;      // failed the convergence audit
    int n_unfitted = 0;    // masked voxels with no estimate (fit errors)
    int n_excluded_zero_truth = 0;
    double convergence_rate = 0.0; // percent

    Stats re_cbf, re_at, re_t1b; // relative errors, percent
    bool has_t1b = false;

    std::optional<double> laplacian_cbf; // absent when undefined
    std::optional<double> laplacian_at;

    Stats signal_mse_stats; // vs the noiseless ground-truth signal

    /// Per-voxel detail rows (index, estimates, REs, audit flag).
    struct Detail {
        int index;
        bool converged;
        double cbf, at;
        std::optional<double> t1b;
        std::optional<double> re_cbf, re_at, re_t1b;
        std::optional<double> mse;
    };
    std::vector<Detail> details;
};

/// Builds the report for one method's estimates on one grid. The grid
/// must carry ground truth.
MetricsReport evaluate_estimates(const VoxelGrid& grid,
                                 const std::vector<VoxelEstimate>& estimates,
                                 const std::string& method);

} // namespace asl
