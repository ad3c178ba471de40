#include "asl/grid.hpp"

#include <cmath>

namespace asl {

std::vector<int> VoxelGrid::masked_indices() const {
    std::vector<int> out;
    for (int i = 0; i < n_voxels(); ++i)
        if (mask[i])
            out.push_back(i);
    return out;
}

void VoxelGrid::validate() const {
    if (width <= 0 || height <= 0)
        throw DataError("VoxelGrid: non-positive dimensions");
    const size_t n = static_cast<size_t>(n_voxels());
    if (mask.size() != n)
        throw DataError("VoxelGrid: mask size does not match dimensions");
    if (signal.size() != n)
        throw DataError("VoxelGrid: signal size does not match dimensions");
    spec.validate();
    for (size_t i = 0; i < n; ++i) {
        if (mask[i]) {
            if (signal[i].size() != spec.n_points())
                throw DataError("VoxelGrid: masked voxel with wrong sample count");
            for (double v : signal[i].values)
                if (!std::isfinite(v))
                    throw DataError("VoxelGrid: non-finite signal sample");
        } else if (!signal[i].empty()) {
            throw DataError("VoxelGrid: unmasked voxel carries signal");
        }
    }
    if (ground_truth) {
        const auto& gt = *ground_truth;
        if (gt.cbf_map.size() != n || gt.at_map.size() != n)
            throw DataError("VoxelGrid: ground-truth map size mismatch");
        if (!(gt.t1b > 0.0))
            throw DataError("VoxelGrid: ground-truth t1b must be positive");
        for (size_t i = 0; i < n; ++i) {
            const bool has_cbf = std::isfinite(gt.cbf_map[i]);
            const bool has_at = std::isfinite(gt.at_map[i]);
            if (mask[i] && (!has_cbf || !has_at))
                throw DataError("VoxelGrid: masked voxel missing ground truth");
            if (!mask[i] && (has_cbf || has_at))
                throw DataError("VoxelGrid: ground truth outside mask");
        }
    }
}

bool operator==(const PwiTimeSeries& a, const PwiTimeSeries& b) {
    return a.values == b.values;
}

namespace {
// NaN-aware elementwise comparison (NaN == NaN for map sentinels).
bool maps_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        return false;
    for (size_t i = 0; i < a.size(); ++i) {
        const bool na = std::isnan(a[i]), nb = std::isnan(b[i]);
        if (na != nb || (!na && a[i] != b[i]))
            return false;
    }
    return true;
}
} // namespace

bool operator==(const GroundTruth& a, const GroundTruth& b) {
    return a.t1b == b.t1b && maps_equal(a.cbf_map, b.cbf_map) &&
           maps_equal(a.at_map, b.at_map);
}

bool operator==(const VoxelGrid& a, const VoxelGrid& b) {
    if (a.width != b.width || a.height != b.height || a.mask != b.mask ||
        a.spec.times != b.spec.times || a.signal != b.signal)
        return false;
    if (a.ground_truth.has_value() != b.ground_truth.has_value())
        return false;
    return !a.ground_truth || *a.ground_truth == *b.ground_truth;
}

} // namespace asl
