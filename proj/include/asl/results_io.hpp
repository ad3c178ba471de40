#pragma once

#include <optional>
#include <string>
#include <vector>

#include "asl/metrics.hpp"

namespace asl {

/// Per-voxel record of a whole-grid fit as persisted in results files.
struct VoxelRecord {
    int x = 0;
    int y = 0;
    bool ok = false;        // fit completed
    bool converged = false; // fitter's own convergence flag
    double cbf = 0.0;
    double at = 0.0;
    std::optional<double> t1b;
    std::vector<double> predicted_signal;
    std::string error; // set when ok == false
};

/// A whole-grid fit outcome: method, seed, per-voxel records and the
/// subject-level t1b where the method produces one. Serialisation is
/// deterministic (fixed key order, shortest round-trip numbers), so
/// identical fits produce byte-identical files.
struct ResultsFile {
    std::string method;
    std::uint64_t seed = 0;
    int width = 0;
    int height = 0;
    std::optional<double> subject_t1b;
    std::vector<VoxelRecord> voxels; // row-major over fitted voxels

    std::vector<VoxelEstimate> to_estimates() const;
};

inline constexpr int kResultsSchemaVersion = 1;

void save_results(const ResultsFile& results, const std::string& path);
ResultsFile load_results(const std::string& path);

/// Report serialisation: JSON for machines, aligned columns for humans.
std::string report_to_json(const MetricsReport& report);
std::string report_table_text(const std::vector<MetricsReport>& rows);

} // namespace asl
