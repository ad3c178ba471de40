#include "asl/results_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace asl {

using nlohmann::json;

std::vector<VoxelEstimate> ResultsFile::to_estimates() const {
    std::vector<VoxelEstimate> out;
    out.reserve(voxels.size());
    for (const auto& v : voxels) {
        VoxelEstimate e;
        e.index = v.y * width + v.x;
        e.fitted = v.ok;
        e.cbf = v.cbf;
        e.at = v.at;
        e.t1b = v.t1b;
        e.predicted_signal = v.predicted_signal;
        out.push_back(std::move(e));
    }
    return out;
}

void save_results(const ResultsFile& results, const std::string& path) {
    json j;
    j["schema_version"] = kResultsSchemaVersion;
    j["method"] = results.method;
    j["seed"] = results.seed;
    j["width"] = results.width;
    j["height"] = results.height;
    if (results.subject_t1b)
        j["subject_t1b"] = *results.subject_t1b;
    else
        j["subject_t1b"] = nullptr;

    json arr = json::array();
    for (const auto& v : results.voxels) {
        json r;
        r["x"] = v.x;
        r["y"] = v.y;
        r["ok"] = v.ok;
        if (v.ok) {
            r["converged"] = v.converged;
            r["cbf"] = v.cbf;
            r["at"] = v.at;
            if (v.t1b)
                r["t1b"] = *v.t1b;
            else
                r["t1b"] = nullptr;
            r["predicted_signal"] = v.predicted_signal;
        } else {
            r["error"] = v.error;
        }
        arr.push_back(std::move(r));
    }
    j["voxels"] = std::move(arr);

    std::ofstream out(path);
    if (!out)
        throw DataError("save_results: cannot open '" + path + "'");
    out << j.dump(2) << "\n";
    if (!out)
        throw DataError("save_results: write failed for '" + path + "'");
}

ResultsFile load_results(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("load_results: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("results: invalid JSON: ") + e.what());
    }

    auto require = [&](const json& obj, const char* field) -> const json& {
        auto it = obj.find(field);
        if (it == obj.end())
            throw ParseError(std::string("results: missing field '") + field + "'");
        return *it;
    };

    if (require(j, "schema_version").get<int>() != kResultsSchemaVersion)
        throw ParseError("results: unsupported schema_version");

    ResultsFile r;
    r.method = require(j, "method").get<std::string>();
    r.seed = require(j, "seed").get<std::uint64_t>();
    r.width = require(j, "width").get<int>();
    r.height = require(j, "height").get<int>();
    const json& t1b = require(j, "subject_t1b");
    if (!t1b.is_null())
        r.subject_t1b = t1b.get<double>();

    for (const auto& rec : require(j, "voxels")) {
        VoxelRecord v;
        v.x = require(rec, "x").get<int>();
        v.y = require(rec, "y").get<int>();
        v.ok = require(rec, "ok").get<bool>();
        if (v.ok) {
            v.converged = require(rec, "converged").get<bool>();
            v.cbf = require(rec, "cbf").get<double>();
            v.at = require(rec, "at").get<double>();
            const json& jt = require(rec, "t1b");
            if (!jt.is_null())
                v.t1b = jt.get<double>();
            v.predicted_signal =
                require(rec, "predicted_signal").get<std::vector<double>>();
        } else {
            v.error = require(rec, "error").get<std::string>();
        }
        r.voxels.push_back(std::move(v));
    }
    return r;
}

namespace {

json stats_to_json(const Stats& s) {
    json j;
    j["mean"] = s.mean;
    j["std"] = s.stddev;
    j["n"] = s.count;
    return j;
}

} // namespace

std::string report_to_json(const MetricsReport& r) {
    json j;
    j["method"] = r.method;
    j["n_voxels"] = r.n_voxels;
    j["n_failed"] = r.n_failed;
    j["n_unfitted"] = r.n_unfitted;
    j["n_excluded_zero_truth"] = r.n_excluded_zero_truth;
    j["convergence_rate"] = r.convergence_rate;

    json re;
    re["cbf"] = stats_to_json(r.re_cbf);
    re["at"] = stats_to_json(r.re_at);
    if (r.has_t1b)
        re["t1b"] = stats_to_json(r.re_t1b);
    else
        re["t1b"] = nullptr;
    j["relative_error_pct"] = std::move(re);

    json lap;
    lap["cbf"] = r.laplacian_cbf ? json(*r.laplacian_cbf) : json(nullptr);
    lap["at"] = r.laplacian_at ? json(*r.laplacian_at) : json(nullptr);
    j["laplacian_variance"] = std::move(lap);

    j["signal_mse"] = stats_to_json(r.signal_mse_stats);

    json details = json::array();
    for (const auto& d : r.details) {
        json row;
        row["index"] = d.index;
        row["converged"] = d.converged;
        row["cbf"] = d.cbf;
        row["at"] = d.at;
        row["t1b"] = d.t1b ? json(*d.t1b) : json(nullptr);
        row["re_cbf"] = d.re_cbf ? json(*d.re_cbf) : json(nullptr);
        row["re_at"] = d.re_at ? json(*d.re_at) : json(nullptr);
        row["re_t1b"] = d.re_t1b ? json(*d.re_t1b) : json(nullptr);
        row["mse"] = d.mse ? json(*d.mse) : json(nullptr);
        details.push_back(std::move(row));
    }
    j["voxels"] = std::move(details);
    return j.dump(2) + "\n";
}

std::string report_table_text(const std::vector<MetricsReport>& rows) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-10s %9s %22s %22s %22s %12s %12s %14s\n",
                  "method", "conv%", "RE cbf (mean+-std)", "RE at", "RE t1b",
                  "lapl cbf", "lapl at", "signal MSE");
    out << line;
    for (const auto& r : rows) {
        auto re = [](const Stats& s) {
            char buf[64];
            if (s.count == 0)
                return std::string("--");
            std::snprintf(buf, sizeof(buf), "%.1f +- %.1f", s.mean, s.stddev);
            return std::string(buf);
        };
        auto lap = [](const std::optional<double>& v) {
            char buf[32];
            if (!v)
                return std::string("--");
            std::snprintf(buf, sizeof(buf), "%.4g", *v);
            return std::string(buf);
        };
        std::snprintf(line, sizeof(line),
                      "%-10s %9.1f %22s %22s %22s %12s %12s %14.6g\n",
                      r.method.c_str(), r.convergence_rate, re(r.re_cbf).c_str(),
                      re(r.re_at).c_str(),
                      (r.has_t1b ? re(r.re_t1b) : std::string("--")).c_str(),
                      lap(r.laplacian_cbf).c_str(), lap(r.laplacian_at).c_str(),
                      r.signal_mse_stats.mean);
        out << line;
    }
    return out.str();
}

} // namespace asl
