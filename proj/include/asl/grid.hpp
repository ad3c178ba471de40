#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "asl/params.hpp"

namespace asl {

/// One voxel's measured signal, aligned to AcquisitionSpec::times.
struct PwiTimeSeries {
    std::vector<double> values;

    bool empty() const { return values.empty(); }
    int size() const { return static_cast<int>(values.size()); }
};

/// Per-voxel truth maps for synthetic data. Maps are full-size
/// (width*height) row-major with NaN outside the mask; t1b is a single
/// grid-wide scalar.
struct GroundTruth {
    std::vector<double> cbf_map;
    std::vector<double> at_map;
    double t1b = 0.0;
};

/// 2D masked grid of voxel time series; the dataset unit. Unmasked
/// voxels carry empty time series.
struct VoxelGrid {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> mask;    // row-major 0/1
    std::vector<PwiTimeSeries> signal; // row-major, empty where unmasked
    AcquisitionSpec spec;
    std::optional<GroundTruth> ground_truth;

    int index(int x, int y) const { return y * width + x; }
    int n_voxels() const { return width * height; }
    bool in_bounds(int x, int y) const {
        return x >= 0 && x < width && y >= 0 && y < height;
    }
    bool masked(int x, int y) const {
        return in_bounds(x, y) && mask[index(x, y)] != 0;
    }

    /// Row-major linear indices of masked voxels.
    std::vector<int> masked_indices() const;

    /// Structural checks: sizes agree, masked voxels have full-length
    /// series, ground truth (if present) covers exactly the mask.
    void validate() const;
};

bool operator==(const PwiTimeSeries& a, const PwiTimeSeries& b);
bool operator==(const GroundTruth& a, const GroundTruth& b);
bool operator==(const VoxelGrid& a, const VoxelGrid& b);

} // namespace asl
