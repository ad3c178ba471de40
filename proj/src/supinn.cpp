#include "asl/supinn.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <thread>

namespace asl {

using ad::Tape;
using ad::Var;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace

std::uint64_t derive_voxel_seed(std::uint64_t base, int voxel) {
    return splitmix64(base + 0x9E3779B97F4A7C15ULL * (voxel + 1));
}

std::vector<double> compute_spatial_weights(const VoxelGrid& grid, int voxel) {
    if (voxel < 0 || voxel >= grid.n_voxels() || !grid.mask[voxel])
        throw UsageError("compute_spatial_weights: voxel outside mask");

    const int n_t = grid.spec.n_points();
    const int x0 = voxel % grid.width;
    const int y0 = voxel / grid.width;

    std::vector<const PwiTimeSeries*> neigh;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0)
                continue;
            if (grid.masked(x0 + dx, y0 + dy))
                neigh.push_back(&grid.signal[grid.index(x0 + dx, y0 + dy)]);
        }

    if (neigh.empty())
        return std::vector<double>(n_t, 1.0); // no neighbourhood to judge by

    std::vector<double> raw(n_t);
    std::vector<bool> zero_var(n_t, false);
    for (int k = 0; k < n_t; ++k) {
        double mean = 0.0;
        for (const auto* s : neigh)
            mean += s->values[k];
        mean /= neigh.size();
        double var = 0.0;
        for (const auto* s : neigh) {
            const double d = s->values[k] - mean;
            var += d * d;
        }
        const double stddev = std::sqrt(var / neigh.size());
        zero_var[k] = stddev <= 1e-9;
        raw[k] = 1.0 / std::max(stddev, 1e-9);
    }

    // Zero-variance time points are maximally certain and get weight 1
    // outright. Rescaling the remaining raw weights without the floored
    // outlier preserves their relative spread; otherwise (as happens on
    // noise-free synthetic data, where pre-arrival samples are exactly
    // equal across neighbours) the 1e9 raw weight would flatten every
    // informative sample onto 0.1.
    std::vector<double> w(n_t, 1.0);
    int n_finite = 0;
    double mn = std::numeric_limits<double>::infinity(), mx = -mn;
    for (int k = 0; k < n_t; ++k)
        if (!zero_var[k]) {
            ++n_finite;
            mn = std::min(mn, raw[k]);
            mx = std::max(mx, raw[k]);
        }
    const bool finite_spread = n_finite > 0 && mx - mn > 1e-12 * mx;
    for (int k = 0; k < n_t; ++k) {
        if (zero_var[k])
            continue;
        if (finite_spread) {
            // Lerp form hits the 0.1 and 1.0 endpoints exactly.
            const double frac = (raw[k] - mn) / (mx - mn);
            w[k] = (1.0 - frac) * 0.1 + frac * 1.0;
        } else if (n_finite < n_t) {
            // Equally uncertain samples next to maximally certain ones:
            // they are jointly the most uncertain and get 0.1.
            w[k] = 0.1;
        }
        // all time points equally uncertain: keep weight 1
    }
    return w;
}

BranchSelection select_branch_voxels(const VoxelGrid& grid, int target,
                                     std::uint64_t seed) {
    const auto masked = grid.masked_indices();
    if (masked.size() < 3)
        throw DataError("select_branch_voxels: mask has fewer than 3 voxels");
    if (target < 0 || target >= grid.n_voxels() || !grid.mask[target])
        throw UsageError("select_branch_voxels: target outside mask");

    std::vector<int> pool;
    pool.reserve(masked.size() - 1);
    for (int i : masked)
        if (i != target)
            pool.push_back(i);

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    const size_t first = pick(rng);
    size_t second = first;
    while (second == first)
        second = pick(rng);

    BranchSelection sel;
    sel.target = target;
    sel.companions = {pool[first], pool[second]};
    sel.seed = seed;
    return sel;
}

SupinnResult fit_supinn(const VoxelGrid& grid, const BranchSelection& sel,
                        const TrainConfig& cfg) {
    cfg.validate();
    grid.validate();
    const std::array<int, 3> voxels{sel.target, sel.companions[0], sel.companions[1]};
    for (int v : voxels)
        if (v < 0 || v >= grid.n_voxels() || !grid.mask[v])
            throw UsageError("fit_supinn: selection voxel outside mask");
    if (voxels[0] == voxels[1] || voxels[0] == voxels[2] || voxels[1] == voxels[2])
        throw UsageError("fit_supinn: selection voxels must be distinct");

    const auto start = std::chrono::steady_clock::now();
    const double tau = HaemodynamicParams{}.tau;
    const SmoothingConfig smoothing;
    const auto colloc = uniform_collocation(cfg.n_collocation, grid.spec.last_time());

    // All branches share one weight-init seed: identical branch data then
    // trains to identical estimates.
    const std::uint64_t net_seed = splitmix64(cfg.seed);

    Tape tape;
    std::array<MlpPinn, 3> nets{MlpPinn(net_seed, grid.spec.last_time(), 1.0),
                                MlpPinn(net_seed, grid.spec.last_time(), 1.0),
                                MlpPinn(net_seed, grid.spec.last_time(), 1.0)};
    std::array<TrainablePhysical, 3> phys;
    std::array<BranchVars, 3> branches;

    // Shared t1b leaf, created up front so every branch couples to it.
    const Var raw_t1b_shared = tape.leaf(0.0);
    const double t1b_scale = 1800.0;

    for (int b = 0; b < 3; ++b) {
        const auto& series = grid.signal[voxels[b]];
        nets[b].s_norm = signal_norm(series);
        phys[b] = init_physical(series, grid.spec, tau);
        phys[b].t1b_scale = t1b_scale;
        const auto weights = compute_spatial_weights(grid, voxels[b]);
        branches[b] = record_branch(tape, nets[b], phys[b], raw_t1b_shared, colloc,
                                    grid.spec.times, series.values, weights, tau,
                                    smoothing.sharpness_k, cfg.gamma);
    }
    const Var total_loss =
        tape.add(tape.add(branches[0].loss, branches[1].loss), branches[2].loss);

    std::vector<Var> net_params;
    std::vector<Var> physical;
    physical.push_back(raw_t1b_shared);
    for (int b = 0; b < 3; ++b) {
        for (Var p : branches[b].network_params())
            net_params.push_back(p);
        physical.push_back(branches[b].raw_cbf);
        physical.push_back(branches[b].raw_at);
    }

    auto target_params = [&]() {
        return HaemodynamicParams{
            phys[0].cbf_scale * std::exp(tape.scalar(branches[0].raw_cbf)),
            phys[0].at_scale * std::exp(tape.scalar(branches[0].raw_at)),
            t1b_scale * std::exp(tape.scalar(raw_t1b_shared)), tau};
    };

    std::vector<double> history;
    run_tiers(tape, total_loss, net_params, physical, cfg, history, target_params);

    SupinnResult result;
    result.t1b_shared = t1b_scale * std::exp(tape.scalar(raw_t1b_shared));
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    for (int b = 0; b < 3; ++b) {
        FitResult& r = result.branches[b];
        r.params.cbf = phys[b].cbf_scale * std::exp(tape.scalar(branches[b].raw_cbf));
        r.params.at = phys[b].at_scale * std::exp(tape.scalar(branches[b].raw_at));
        r.params.t1b = result.t1b_shared;
        r.params.tau = tau;
        r.loss_history = history;
        MlpPinn trained = nets[b];
        trained.w1 = tape.value(branches[b].w1);
        trained.b1 = tape.value(branches[b].b1);
        trained.w2 = tape.value(branches[b].w2);
        trained.b2 = tape.value(branches[b].b2);
        trained.w3 = tape.value(branches[b].w3);
        trained.b3 = tape.value(branches[b].b3);
        r.predicted_signal = trained.forward_batch(grid.spec.times);
        r.converged = true;
        r.wall_time_s = wall;
    }
    return result;
}

RoiFitResult fit_roi_supinn(const VoxelGrid& grid, const TrainConfig& cfg, int jobs) {
    cfg.validate();
    grid.validate();

    const int n = grid.n_voxels();
    RoiFitResult out;
    out.cbf_map.assign(n, std::numeric_limits<double>::quiet_NaN());
    out.at_map.assign(n, std::numeric_limits<double>::quiet_NaN());
    out.t1b_map.assign(n, std::numeric_limits<double>::quiet_NaN());
    out.voxel_results.resize(n);

    const auto targets = grid.masked_indices();
    if (targets.empty())
        return out;

    struct VoxelOutcome {
        bool failed = false;
        std::string note;
        double t1b = 0.0;
    };
    std::vector<VoxelOutcome> outcomes(n);

    auto fit_one = [&](int voxel) {
        const std::uint64_t seed_v = derive_voxel_seed(cfg.seed, voxel);
        try {
            const auto sel = select_branch_voxels(grid, voxel, seed_v);
            TrainConfig vcfg = cfg;
            vcfg.seed = splitmix64(seed_v);
            SupinnResult r = fit_supinn(grid, sel, vcfg);
            out.cbf_map[voxel] = r.branches[0].params.cbf;
            out.at_map[voxel] = r.branches[0].params.at;
            out.t1b_map[voxel] = r.t1b_shared;
            out.voxel_results[voxel] = std::move(r.branches[0]);
            out.voxel_results[voxel].loss_history.clear();
            out.voxel_results[voxel].loss_history.shrink_to_fit();
            outcomes[voxel].t1b = r.t1b_shared;
        } catch (const std::exception& e) {
            outcomes[voxel].failed = true;
            outcomes[voxel].note = e.what();
        }
    };

    if (jobs <= 1) {
        for (int voxel : targets)
            fit_one(voxel);
    } else {
        std::atomic<size_t> next{0};
        auto worker = [&]() {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= targets.size())
                    return;
                fit_one(targets[i]);
            }
        };
        std::vector<std::thread> pool;
        const int n_threads = std::min<int>(jobs, static_cast<int>(targets.size()));
        pool.reserve(n_threads);
        for (int t = 0; t < n_threads; ++t)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }

    double t1b_acc = 0.0;
    int t1b_count = 0;
    for (int voxel : targets) {
        if (outcomes[voxel].failed) {
            out.failed_voxels.push_back(voxel);
            out.failure_notes.push_back(outcomes[voxel].note);
        } else {
            t1b_acc += outcomes[voxel].t1b;
            ++t1b_count;
        }
    }
    out.t1b_subject = t1b_count > 0 ? t1b_acc / t1b_count : 0.0;
    return out;
}

} // namespace asl
