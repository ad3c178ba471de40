#pragma once

#include <optional>
#include <vector>

#include "asl/pinn.hpp"
#include "asl/supinn.hpp"

namespace asl {

/// Robust least-squares configuration. The Huber scale is re-estimated
/// each accepted step as huber_c * MAD of the current residuals; when
/// the MAD collapses (clean data) the fit degrades gracefully to plain
/// least squares.
struct LsfConfig {
    enum class Mode { FixedT1b, FreeT1b };

    Mode mode = Mode::FreeT1b;
    std::vector<double> at_grid;    // multistart arrival times, ms
    int max_iterations = 200;       // LM iterations per start
    double huber_c = 1.345;         // delta = huber_c * MAD(residuals)
    double step_tol = 1e-8;         // relative parameter-step tolerance

    static std::vector<double> default_at_grid(); // 300..2100 step 300

    LsfConfig();
    void validate(const AcquisitionSpec& spec) const;
};

/// Levenberg-Marquardt minimisation of Huber-weighted residuals between
/// the closed-form signal model and the data, multistarted over
/// cfg.at_grid; the best final cost wins. t1b_fixed is required in
/// FixedT1b mode and ignored otherwise. If no start improves on its
/// initial cost the result carries converged = false (best-effort
/// parameters are still returned).
FitResult fit_voxel_lsf(const PwiTimeSeries& series, const AcquisitionSpec& spec,
                        const LsfConfig& cfg,
                        std::optional<double> t1b_fixed = std::nullopt);

/// Independently fits the 3 selected voxels in free-t1b mode and
/// attributes the arithmetic mean of each parameter to the target
/// voxel. Voxels whose fit fails are dropped from the average; if all
/// fail the result carries converged = false.
FitResult fit_lsf_multi(const VoxelGrid& grid, const BranchSelection& sel,
                        const LsfConfig& cfg);

/// Fixed-t1b LSF over every masked voxel.
struct LsfMaps {
    std::vector<double> cbf_map; // NaN outside mask
    std::vector<double> at_map;
    std::vector<std::uint8_t> converged; // per voxel, 0 outside mask
};

LsfMaps ground_truth_from_lsf(const VoxelGrid& grid, double t1b);

} // namespace asl
