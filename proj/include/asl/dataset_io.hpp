#pragma once

#include <string>
#include <vector>

#include "asl/grid.hpp"

namespace asl {

/// Dataset file with an unsupported schema_version.
class VersionError : public DataError {
public:
    using DataError::DataError;
};

inline constexpr int kDatasetSchemaVersion = 1;

/// Writes the grid as a single JSON document. Doubles round-trip
/// exactly (shortest-representation decimal encoding).
void save_dataset(const VoxelGrid& grid, const std::string& path);

/// Loads a dataset written by save_dataset. Throws ParseError naming the
/// offending field on malformed input, VersionError on schema mismatch.
VoxelGrid load_dataset(const std::string& path);

/// Parameter-map CSV: first line "width,height" (the values), then one
/// comma-separated row per grid row. Out-of-mask entries are "nan".
void save_map_csv(const std::vector<double>& map, int width, int height,
                  const std::string& path);

/// Parses a map CSV written by save_map_csv; returns the row-major map
/// and sets width/height.
std::vector<double> load_map_csv(const std::string& path, int& width, int& height);

} // namespace asl
