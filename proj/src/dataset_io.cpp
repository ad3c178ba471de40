#include "asl/dataset_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace asl {

using nlohmann::json;

namespace {

json map_to_json(const std::vector<double>& map) {
    json arr = json::array();
    for (double v : map) {
        if (std::isnan(v))
            arr.push_back(nullptr);
        else
            arr.push_back(v);
    }
    return arr;
}

std::vector<double> map_from_json(const json& arr, const char* field) {
    if (!arr.is_array())
        throw ParseError(std::string("dataset: field '") + field + "' must be an array");
    std::vector<double> out;
    out.reserve(arr.size());
    for (const auto& v : arr) {
        if (v.is_null())
            out.push_back(std::numeric_limits<double>::quiet_NaN());
        else if (v.is_number())
            out.push_back(v.get<double>());
        else
            throw ParseError(std::string("dataset: field '") + field +
                             "' must contain numbers or null");
    }
    return out;
}

const json& require(const json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end())
        throw ParseError(std::string("dataset: missing field '") + field + "'");
    return *it;
}

} // namespace

void save_dataset(const VoxelGrid& grid, const std::string& path) {
    grid.validate();

    json j;
    j["schema_version"] = kDatasetSchemaVersion;
    j["times_ms"] = grid.spec.times;
    j["width"] = grid.width;
    j["height"] = grid.height;
    j["mask"] = grid.mask;

    json sig = json::array();
    for (const auto& s : grid.signal) {
        if (s.empty())
            sig.push_back(nullptr);
        else
            sig.push_back(s.values);
    }
    j["signal"] = std::move(sig);

    if (grid.ground_truth) {
        json gt;
        gt["cbf_map"] = map_to_json(grid.ground_truth->cbf_map);
        gt["at_map"] = map_to_json(grid.ground_truth->at_map);
        gt["t1b"] = grid.ground_truth->t1b;
        j["ground_truth"] = std::move(gt);
    }

    std::ofstream out(path);
    if (!out)
        throw DataError("save_dataset: cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
    if (!out)
        throw DataError("save_dataset: write failed for '" + path + "'");
}

VoxelGrid load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("load_dataset: cannot open '" + path + "'");

    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("dataset: invalid JSON: ") + e.what());
    }

    const json& ver = require(j, "schema_version");
    if (!ver.is_number_integer() || ver.get<int>() != kDatasetSchemaVersion)
        throw VersionError("dataset: unsupported schema_version");

    VoxelGrid grid;
    const json& times = require(j, "times_ms");
    if (!times.is_array() || times.empty())
        throw ParseError("dataset: field 'times_ms' must be a non-empty array");
    grid.spec.times = times.get<std::vector<double>>();

    const json& jw = require(j, "width");
    const json& jh = require(j, "height");
    if (!jw.is_number_integer() || !jh.is_number_integer())
        throw ParseError("dataset: fields 'width'/'height' must be integers");
    grid.width = jw.get<int>();
    grid.height = jh.get<int>();
    if (grid.width <= 0 || grid.height <= 0)
        throw ParseError("dataset: fields 'width'/'height' must be positive");

    const json& jm = require(j, "mask");
    if (!jm.is_array() || jm.size() != static_cast<size_t>(grid.n_voxels()))
        throw ParseError("dataset: field 'mask' has wrong length");
    grid.mask.reserve(jm.size());
    for (const auto& m : jm) {
        if (!m.is_number_integer())
            throw ParseError("dataset: field 'mask' must contain 0/1 integers");
        grid.mask.push_back(m.get<int>() ? 1 : 0);
    }

    const json& js = require(j, "signal");
    if (!js.is_array() || js.size() != static_cast<size_t>(grid.n_voxels()))
        throw ParseError("dataset: field 'signal' has wrong length");
    grid.signal.resize(js.size());
    for (size_t i = 0; i < js.size(); ++i) {
        if (js[i].is_null())
            continue;
        if (!js[i].is_array())
            throw ParseError("dataset: field 'signal' entries must be arrays or null");
        grid.signal[i].values = js[i].get<std::vector<double>>();
    }

    if (j.contains("ground_truth") && !j["ground_truth"].is_null()) {
        const json& jgt = j["ground_truth"];
        GroundTruth gt;
        gt.cbf_map = map_from_json(require(jgt, "cbf_map"), "ground_truth.cbf_map");
        gt.at_map = map_from_json(require(jgt, "at_map"), "ground_truth.at_map");
        const json& t1b = require(jgt, "t1b");
        if (!t1b.is_number())
            throw ParseError("dataset: field 'ground_truth.t1b' must be a number");
        gt.t1b = t1b.get<double>();
        grid.ground_truth = std::move(gt);
    }

    try {
        grid.validate();
    } catch (const DataError& e) {
        throw ParseError(std::string("dataset: inconsistent contents: ") + e.what());
    }
    return grid;
}

void save_map_csv(const std::vector<double>& map, int width, int height,
                  const std::string& path) {
    if (map.size() != static_cast<size_t>(width) * height)
        throw UsageError("save_map_csv: map size does not match dimensions");
    std::ofstream out(path);
    if (!out)
        throw DataError("save_map_csv: cannot open '" + path + "'");
    out << width << "," << height << "\n";
    char buf[32];
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double v = map[y * width + x];
            if (std::isnan(v)) {
                out << "nan";
            } else {
                std::snprintf(buf, sizeof(buf), "%.17g", v);
                out << buf;
            }
            out << (x + 1 < width ? "," : "\n");
        }
    }
}

std::vector<double> load_map_csv(const std::string& path, int& width, int& height) {
    std::ifstream in(path);
    if (!in)
        throw DataError("load_map_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw ParseError("map csv: empty file");
    if (std::sscanf(line.c_str(), "%d,%d", &width, &height) != 2 || width <= 0 ||
        height <= 0)
        throw ParseError("map csv: malformed header line");

    std::vector<double> map;
    map.reserve(static_cast<size_t>(width) * height);
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            map.push_back(cell == "nan" ? std::numeric_limits<double>::quiet_NaN()
                                        : std::stod(cell));
    }
    if (map.size() != static_cast<size_t>(width) * height)
        throw ParseError("map csv: cell count does not match header");
    return map;
}

} // namespace asl
