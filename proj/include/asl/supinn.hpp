#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "asl/pinn.hpp"

namespace asl {

/// Voxel triple for one multi-branch run: the target voxel plus two
/// randomly drawn companions, all inside the mask and distinct.
struct BranchSelection {
    int target = -1;
    std::array<int, 2> companions{-1, -1};
    std::uint64_t seed = 0;
};

/// Stable per-voxel seed stream: independent of fit order, so parallel
/// and sequential whole-grid runs produce identical results.
std::uint64_t derive_voxel_seed(std::uint64_t base, int voxel);

/// Per-timepoint data weights from the spatial variability of the
/// 8-connected in-mask neighbourhood: raw weight = 1 / std of the
/// neighbour signals at that time point (mean over the actual neighbour
/// count; std floored at 1e-9 before inversion), then linearly rescaled
/// per voxel so the least uncertain time point gets weight 1 and the
/// most uncertain 0.1. A voxel with no in-mask neighbours, or equal raw
/// weights everywhere, gets all weights 1.
std::vector<double> compute_spatial_weights(const VoxelGrid& grid, int voxel);

/// Uniformly draws 2 distinct companion voxels from the mask (excluding
/// the target). Deterministic per seed. Throws DataError for masks
/// smaller than 3.
BranchSelection select_branch_voxels(const VoxelGrid& grid, int target,
                                     std::uint64_t seed);

/// Joint 3-branch fit outcome: per-branch local estimates (target
/// first, companions after) plus the single shared t1b.
struct SupinnResult {
    std::array<FitResult, 3> branches;
    double t1b_shared = 0.0;
};

/// Three PINN branches with their own cbf/at trainables and spatial
/// uncertainty weights in the data terms, one shared t1b entering every
/// branch's physics residual; total loss is the sum of the branch
/// composite losses, trained with the same three-tier schedule.
SupinnResult fit_supinn(const VoxelGrid& grid, const BranchSelection& sel,
                        const TrainConfig& cfg);

/// Whole-grid orchestration: one SUPINN run per masked voxel (the voxel
/// as target, 2 seeded random companions); map entries come from the
/// target's own branch and the subject t1b is the mean of the shared
/// estimates. Failed voxels are recorded, not fatal.
struct RoiFitResult {
    std::vector<double> cbf_map; // NaN outside mask / on failure
    std::vector<double> at_map;
    std::vector<double> t1b_map; // shared estimate of the voxel's run
    double t1b_subject = 0.0;
    std::vector<FitResult> voxel_results;   // indexed like the grid
    std::vector<int> failed_voxels;         // linear indices
    std::vector<std::string> failure_notes; // aligned with failed_voxels
};

RoiFitResult fit_roi_supinn(const VoxelGrid& grid, const TrainConfig& cfg,
                            int jobs = 1);

} // namespace asl
