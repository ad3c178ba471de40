#include "asl/pipeline.hpp"

#include <atomic>
#include <optional>
#include <thread>

#include "asl/pinn.hpp"
#include "asl/supinn.hpp"

namespace asl {

namespace {

template <typename FitOne>
std::vector<VoxelRecord> fit_grid(const VoxelGrid& grid, int jobs, FitOne fit_one) {
    const auto targets = grid.masked_indices();
    std::vector<std::optional<VoxelRecord>> slots(grid.n_voxels());

    auto run = [&](int voxel) {
        VoxelRecord rec;
        rec.x = voxel % grid.width;
        rec.y = voxel / grid.width;
        try {
            fit_one(voxel, rec);
            rec.ok = true;
        } catch (const std::exception& e) {
            rec.ok = false;
            rec.error = e.what();
        }
        slots[voxel] = std::move(rec);
    };

    if (jobs <= 1) {
        for (int v : targets)
            run(v);
    } else {
        std::atomic<size_t> next{0};
        auto worker = [&]() {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= targets.size())
                    return;
                run(targets[i]);
            }
        };
        std::vector<std::thread> pool;
        for (int t = 0; t < std::min<int>(jobs, static_cast<int>(targets.size())); ++t)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }

    std::vector<VoxelRecord> records;
    records.reserve(targets.size());
    for (int v : targets)
        records.push_back(std::move(*slots[v]));
    return records;
}

} // namespace

ResultsFile fit_dataset(const VoxelGrid& grid, const std::string& method,
                        std::uint64_t seed, const TrainConfig& train_in,
                        const LsfConfig& lsf, int jobs,
                        std::optional<double> t1b_fixed) {
    grid.validate();

    ResultsFile results;
    results.method = method;
    results.seed = seed;
    results.width = grid.width;
    results.height = grid.height;

    TrainConfig train = train_in;
    train.seed = seed;

    if (method == "lsf") {
        LsfConfig cfg = lsf;
        std::optional<double> fixed;
        if (cfg.mode == LsfConfig::Mode::FixedT1b) {
            if (t1b_fixed)
                fixed = t1b_fixed;
            else if (grid.ground_truth)
                fixed = grid.ground_truth->t1b;
            else
                throw ConfigError(
                    "fixed-t1b LSF needs a reference t1b or dataset ground truth");
        }
        results.voxels = fit_grid(grid, jobs, [&](int v, VoxelRecord& rec) {
            const FitResult r = fit_voxel_lsf(grid.signal[v], grid.spec, cfg, fixed);
            rec.converged = r.converged;
            rec.cbf = r.params.cbf;
            rec.at = r.params.at;
            if (cfg.mode == LsfConfig::Mode::FreeT1b)
                rec.t1b = r.params.t1b;
            rec.predicted_signal = r.predicted_signal;
        });
    } else if (method == "lsf-multi") {
        results.voxels = fit_grid(grid, jobs, [&](int v, VoxelRecord& rec) {
            const auto sel = select_branch_voxels(grid, v, derive_voxel_seed(seed, v));
            const FitResult r = fit_lsf_multi(grid, sel, lsf);
            rec.converged = r.converged;
            rec.cbf = r.params.cbf;
            rec.at = r.params.at;
            rec.t1b = r.params.t1b;
            rec.predicted_signal = r.predicted_signal;
        });
    } else if (method == "pinn") {
        results.voxels = fit_grid(grid, jobs, [&](int v, VoxelRecord& rec) {
            TrainConfig cfg = train;
            cfg.seed = derive_voxel_seed(seed, v);
            const FitResult r = fit_voxel_pinn(grid.signal[v], grid.spec, cfg);
            rec.converged = r.converged;
            rec.cbf = r.params.cbf;
            rec.at = r.params.at;
            rec.t1b = r.params.t1b;
            rec.predicted_signal = r.predicted_signal;
        });
    } else if (method == "supinn") {
        const RoiFitResult roi = fit_roi_supinn(grid, train, jobs);
        results.subject_t1b = roi.t1b_subject;
        std::vector<bool> failed(grid.n_voxels(), false);
        std::vector<std::string> notes(grid.n_voxels());
        for (size_t i = 0; i < roi.failed_voxels.size(); ++i) {
            failed[roi.failed_voxels[i]] = true;
            notes[roi.failed_voxels[i]] = roi.failure_notes[i];
        }
        for (int v : grid.masked_indices()) {
            VoxelRecord rec;
            rec.x = v % grid.width;
            rec.y = v / grid.width;
            if (failed[v]) {
                rec.ok = false;
                rec.error = notes[v];
            } else {
                rec.ok = true;
                rec.converged = roi.voxel_results[v].converged;
                rec.cbf = roi.cbf_map[v];
                rec.at = roi.at_map[v];
                rec.t1b = roi.t1b_map[v];
                rec.predicted_signal = roi.voxel_results[v].predicted_signal;
            }
            results.voxels.push_back(std::move(rec));
        }
    } else {
        throw ConfigError("unknown method '" + method +
                          "' (expected lsf, lsf-multi, pinn or supinn)");
    }
    return results;
}

} // namespace asl
