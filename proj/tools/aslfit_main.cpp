// aslfit: phantom generation, per-voxel perfusion fitting, evaluation
// and map export for multi-delay ASL-like time series.
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "asl/dataset_io.hpp"
#include "asl/metrics.hpp"
#include "asl/phantom.hpp"
#include "asl/pipeline.hpp"
#include "asl/results_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVoxelFailures = 3;

// Values for a JSON config file (flags win over config entries). Keys
// are the long option names without the leading dashes.
json load_config_json(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--config") {
            std::ifstream in(argv[i + 1]);
            if (!in)
                throw asl::ConfigError(std::string("cannot open config file ") +
                                       argv[i + 1]);
            json j;
            try {
                in >> j;
            } catch (const json::exception& e) {
                throw asl::ConfigError(std::string("config file: ") + e.what());
            }
            return j;
        }
    return json::object();
}

template <typename T>
void config_default(const json& cfg, const char* key, T& value) {
    if (cfg.contains(key))
        value = cfg.at(key).get<T>();
}

std::string noise_suffix(double std) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", std);
    return buf;
}

struct GenerateArgs {
    std::string out = "phantom.json";
    asl::PhantomConfig phantom;
    std::vector<double> sweep;
};

int cmd_generate(const GenerateArgs& a) {
    auto write_one = [&](double noise_std, const std::string& path) {
        asl::PhantomConfig cfg = a.phantom;
        cfg.noise_std = noise_std;
        const asl::VoxelGrid grid = asl::generate_phantom(cfg);
        asl::save_dataset(grid, path);
        std::printf("wrote %s: %dx%d grid, %d masked voxels, noise std %g, seed %llu\n",
                    path.c_str(), grid.width, grid.height,
                    static_cast<int>(grid.masked_indices().size()), noise_std,
                    static_cast<unsigned long long>(cfg.seed));
    };

    if (a.sweep.empty()) {
        write_one(a.phantom.noise_std, a.out);
    } else {
        const fs::path base(a.out);
        fs::path stem = base;
        stem.replace_extension();
        for (double std : a.sweep) {
            fs::path p = stem;
            p += "_noise" + noise_suffix(std);
            p += base.extension().empty() ? fs::path(".json") : base.extension();
            write_one(std, p.string());
        }
    }
    return kExitOk;
}

struct FitArgs {
    std::string dataset;
    std::string method = "lsf";
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    int jobs = 0; // 0 = hardware concurrency
    asl::TrainConfig train;
    std::string lsf_mode = "free";
    double t1b_fixed = 0.0; // 0 = use dataset ground truth
    std::vector<double> tiers_flat;
    std::vector<double> lrs_flat;
};

void write_maps(const asl::ResultsFile& results, const std::string& dir) {
    const int n = results.width * results.height;
    std::vector<double> cbf(n, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> at(n, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> t1b(n, std::numeric_limits<double>::quiet_NaN());
    bool any_t1b = false;
    for (const auto& v : results.voxels) {
        if (!v.ok)
            continue;
        const int i = v.y * results.width + v.x;
        cbf[i] = v.cbf;
        at[i] = v.at;
        if (v.t1b) {
            t1b[i] = *v.t1b;
            any_t1b = true;
        }
    }
    asl::save_map_csv(cbf, results.width, results.height,
                      (fs::path(dir) / "cbf_map.csv").string());
    asl::save_map_csv(at, results.width, results.height,
                      (fs::path(dir) / "at_map.csv").string());
    if (any_t1b)
        asl::save_map_csv(t1b, results.width, results.height,
                          (fs::path(dir) / "t1b_map.csv").string());
}

int cmd_fit(const FitArgs& a) {
    const asl::VoxelGrid grid = asl::load_dataset(a.dataset);
    const int jobs = a.jobs > 0
                         ? a.jobs
                         : std::max(1u, std::thread::hardware_concurrency());

    asl::TrainConfig train = a.train;
    asl::LsfConfig lsf;
    std::optional<double> t1b_fixed;
    if (a.method == "lsf") {
        if (a.lsf_mode == "fixed")
            lsf.mode = asl::LsfConfig::Mode::FixedT1b;
        else if (a.lsf_mode != "free")
            throw asl::ConfigError("--lsf-mode must be free or fixed");
        if (a.t1b_fixed > 0.0)
            t1b_fixed = a.t1b_fixed;
    }

    const asl::ResultsFile results =
        asl::fit_dataset(grid, a.method, a.seed, train, lsf, jobs, t1b_fixed);

    fs::create_directories(a.out_dir);
    asl::save_results(results, (fs::path(a.out_dir) / "results.json").string());
    write_maps(results, a.out_dir);

    int failures = 0;
    for (const auto& v : results.voxels)
        if (!v.ok)
            ++failures;
    std::printf("fit %s: %zu voxels, %d failures -> %s\n", a.method.c_str(),
                results.voxels.size(), failures, a.out_dir.c_str());
    return failures == 0 ? kExitOk : kExitVoxelFailures;
}

struct EvaluateArgs {
    std::string results;
    std::string dataset;
    std::vector<std::string> pairs; // results:dataset
    std::string out = "report";
};

int cmd_evaluate(const EvaluateArgs& a) {
    std::vector<std::pair<std::string, std::string>> pairs;
    if (!a.results.empty() || !a.dataset.empty()) {
        if (a.results.empty() || a.dataset.empty())
            throw asl::ConfigError("evaluate needs both --results and --dataset");
        pairs.emplace_back(a.results, a.dataset);
    }
    for (const auto& p : a.pairs) {
        const auto sep = p.find(':');
        if (sep == std::string::npos)
            throw asl::ConfigError("--pair expects results.json:dataset.json");
        pairs.emplace_back(p.substr(0, sep), p.substr(sep + 1));
    }
    if (pairs.empty())
        throw asl::ConfigError("evaluate needs --results/--dataset or --pair");

    std::vector<asl::MetricsReport> reports;
    for (const auto& [res_path, data_path] : pairs) {
        const asl::ResultsFile results = asl::load_results(res_path);
        const asl::VoxelGrid grid = asl::load_dataset(data_path);
        if (!grid.ground_truth)
            throw asl::DataError("evaluate: dataset '" + data_path +
                                 "' has no ground truth");
        reports.push_back(
            asl::evaluate_estimates(grid, results.to_estimates(), results.method));
    }

    std::ofstream jout(a.out + ".json");
    if (!jout)
        throw asl::DataError("evaluate: cannot write " + a.out + ".json");
    if (reports.size() == 1) {
        jout << asl::report_to_json(reports[0]);
    } else {
        jout << "[\n";
        for (size_t i = 0; i < reports.size(); ++i) {
            std::string body = asl::report_to_json(reports[i]);
            body.pop_back(); // trailing newline
            jout << body << (i + 1 < reports.size() ? ",\n" : "\n");
        }
        jout << "]\n";
    }
    jout.close();

    const std::string table = asl::report_table_text(reports);
    std::ofstream tout(a.out + ".txt");
    tout << table;
    tout.close();
    std::fputs(table.c_str(), stdout);
    return kExitOk;
}

struct ExportArgs {
    std::string results;
    std::string out_dir = ".";
    bool pgm = false;
};

void write_pgm(const std::vector<double>& map, int w, int h, const std::string& path) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : map)
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    std::ofstream out(path);
    out << "P2\n" << w << " " << h << "\n255\n";
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double v = map[y * w + x];
            int g = 0;
            if (std::isfinite(v) && hi > lo)
                g = static_cast<int>(255.0 * (v - lo) / (hi - lo) + 0.5);
            else if (std::isfinite(v))
                g = 128;
            out << g << (x + 1 < w ? " " : "\n");
        }
    }
}

int cmd_export_maps(const ExportArgs& a) {
    const asl::ResultsFile results = asl::load_results(a.results);
    fs::create_directories(a.out_dir);
    write_maps(results, a.out_dir);
    if (a.pgm) {
        const int n = results.width * results.height;
        std::vector<double> cbf(n, std::numeric_limits<double>::quiet_NaN());
        std::vector<double> at(n, std::numeric_limits<double>::quiet_NaN());
        for (const auto& v : results.voxels)
            if (v.ok) {
                cbf[v.y * results.width + v.x] = v.cbf;
                at[v.y * results.width + v.x] = v.at;
            }
        write_pgm(cbf, results.width, results.height,
                  (fs::path(a.out_dir) / "cbf_map.pgm").string());
        write_pgm(at, results.width, results.height,
                  (fs::path(a.out_dir) / "at_map.pgm").string());
    }
    std::printf("exported maps for %s to %s\n", results.method.c_str(),
                a.out_dir.c_str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Perfusion parameter estimation for multi-delay ASL-like series"};
    app.require_subcommand(1);
    app.fallthrough(true);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (flags win)");

    json cfg;
    try {
        cfg = load_config_json(argc, argv);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }

    GenerateArgs gen;
    config_default(cfg, "out", gen.out);
    config_default(cfg, "width", gen.phantom.width);
    config_default(cfg, "height", gen.phantom.height);
    config_default(cfg, "cbf-min", gen.phantom.cbf_min);
    config_default(cfg, "cbf-max", gen.phantom.cbf_max);
    config_default(cfg, "at-min", gen.phantom.at_min);
    config_default(cfg, "at-max", gen.phantom.at_max);
    config_default(cfg, "t1b", gen.phantom.t1b);
    config_default(cfg, "smoothness", gen.phantom.smoothness_voxels);
    config_default(cfg, "noise-std", gen.phantom.noise_std);
    config_default(cfg, "seed", gen.phantom.seed);
    config_default(cfg, "noise-sweep", gen.sweep);

    auto* generate = app.add_subcommand("generate", "Generate a synthetic dataset");
    generate->add_option("--config", config_path, "JSON config file (flags win)");
    generate->add_option("--out", gen.out, "Output dataset path");
    generate->add_option("--width", gen.phantom.width, "Grid width");
    generate->add_option("--height", gen.phantom.height, "Grid height");
    generate->add_option("--cbf-min", gen.phantom.cbf_min, "CBF range low, a.u./ms");
    generate->add_option("--cbf-max", gen.phantom.cbf_max, "CBF range high");
    generate->add_option("--at-min", gen.phantom.at_min, "AT range low, ms");
    generate->add_option("--at-max", gen.phantom.at_max, "AT range high, ms");
    generate->add_option("--t1b", gen.phantom.t1b, "Global T1b, ms");
    generate->add_option("--smoothness", gen.phantom.smoothness_voxels,
                         "Field smoothing sigma, voxels");
    generate->add_option("--noise-std", gen.phantom.noise_std,
                         "Noise std as a fraction of peak signal");
    generate->add_option("--noise-sweep", gen.sweep,
                         "Comma-separated noise stds; writes one file per level")
        ->delimiter(',');
    generate->add_option("--seed", gen.phantom.seed, "Generation seed");

    FitArgs fit;
    config_default(cfg, "dataset", fit.dataset);
    config_default(cfg, "method", fit.method);
    config_default(cfg, "out-dir", fit.out_dir);
    config_default(cfg, "seed", fit.seed);
    config_default(cfg, "jobs", fit.jobs);
    config_default(cfg, "gamma", fit.train.gamma);
    config_default(cfg, "collocation", fit.train.n_collocation);
    config_default(cfg, "lsf-mode", fit.lsf_mode);
    config_default(cfg, "t1b-fixed", fit.t1b_fixed);

    auto* fitcmd = app.add_subcommand("fit", "Fit every masked voxel");
    fitcmd->add_option("--config", config_path, "JSON config file (flags win)");
    fitcmd->add_option("--dataset", fit.dataset, "Input dataset JSON")->required();
    fitcmd->add_option("--method", fit.method, "lsf | lsf-multi | pinn | supinn");
    fitcmd->add_option("--out-dir", fit.out_dir, "Output directory");
    fitcmd->add_option("--seed", fit.seed, "Fit seed");
    fitcmd->add_option("--jobs", fit.jobs, "Parallel voxel fits (0 = cores)");
    fitcmd->add_option("--gamma", fit.train.gamma, "Data-loss weight");
    fitcmd->add_option("--collocation", fit.train.n_collocation,
                       "Collocation point count");
    fitcmd->add_option("--tiers", fit.tiers_flat, "Tier iteration counts a,b,c")
        ->delimiter(',');
    fitcmd->add_option("--lrs", fit.lrs_flat, "Tier learning rates a,b,c")
        ->delimiter(',');
    fitcmd->add_option("--lsf-mode", fit.lsf_mode, "free | fixed (lsf only)");
    fitcmd->add_option("--t1b-fixed", fit.t1b_fixed,
                       "Fixed T1b for --lsf-mode fixed, ms");

    EvaluateArgs ev;
    config_default(cfg, "results", ev.results);
    config_default(cfg, "dataset", ev.dataset);
    config_default(cfg, "report-out", ev.out);

    auto* evaluate = app.add_subcommand("evaluate", "Score results against truth");
    evaluate->add_option("--config", config_path, "JSON config file (flags win)");
    evaluate->add_option("--results", ev.results, "Results JSON from fit");
    evaluate->add_option("--dataset", ev.dataset, "Dataset with ground truth");
    evaluate->add_option("--pair", ev.pairs,
                         "results.json:dataset.json (repeatable)");
    evaluate->add_option("--out", ev.out, "Report path prefix");

    ExportArgs ex;
    auto* exportcmd = app.add_subcommand("export-maps", "Write parameter map files");
    exportcmd->add_option("--config", config_path, "JSON config file (flags win)");
    exportcmd->add_option("--results", ex.results, "Results JSON from fit")
        ->required();
    exportcmd->add_option("--out-dir", ex.out_dir, "Output directory");
    exportcmd->add_flag("--pgm", ex.pgm, "Also write grayscale PGM images");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (generate->parsed())
            return cmd_generate(gen);
        if (fitcmd->parsed()) {
            if (!fit.tiers_flat.empty()) {
                if (fit.tiers_flat.size() != 3)
                    throw asl::ConfigError("--tiers expects three counts");
                for (int i = 0; i < 3; ++i)
                    fit.train.tier_iters[i] = static_cast<int>(fit.tiers_flat[i]);
            }
            if (!fit.lrs_flat.empty()) {
                if (fit.lrs_flat.size() != 3)
                    throw asl::ConfigError("--lrs expects three rates");
                for (int i = 0; i < 3; ++i)
                    fit.train.tier_lrs[i] = fit.lrs_flat[i];
            }
            return cmd_fit(fit);
        }
        if (evaluate->parsed())
            return cmd_evaluate(ev);
        if (exportcmd->parsed())
            return cmd_export_maps(ex);
    } catch (const asl::UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const asl::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const asl::DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return kExitUsage;
}
