#pragma once

#include <string>

#include "asl/lsf.hpp"
#include "asl/results_io.hpp"

namespace asl {

/// Whole-grid fit with any of the four methods ("lsf", "lsf-multi",
/// "pinn", "supinn"), producing the per-voxel records the results file
/// carries. Per-voxel work is seeded independently of execution order;
/// jobs > 1 parallelises over voxels. Throws ConfigError for unknown
/// method names. For "lsf" in fixed-t1b mode the reference t1b comes
/// from t1b_fixed or, failing that, the dataset ground truth.
ResultsFile fit_dataset(const VoxelGrid& grid, const std::string& method,
                        std::uint64_t seed, const TrainConfig& train,
                        const LsfConfig& lsf, int jobs = 1,
                        std::optional<double> t1b_fixed = std::nullopt);

} // namespace asl
