#include "asl/metrics.hpp"

#include <cmath>
#include <limits>

#include "asl/signal_model.hpp"

namespace asl {

double relative_error(double predicted, double target) {
    if (target == 0.0)
        throw MetricError("relative_error: zero target");
    return (predicted - target) / target * 100.0;
}

bool convergence_failed(double cbf_estimate, double cbf_truth) {
    if (cbf_truth == 0.0)
        throw MetricError("convergence_failed: zero truth");
    const double ratio = cbf_estimate / cbf_truth;
    return ratio > 10.0 || ratio < 0.1;
}

double laplacian_variance(const std::vector<double>& map,
                          const std::vector<std::uint8_t>& mask, int width,
                          int height) {
    if (map.size() != static_cast<size_t>(width) * height ||
        mask.size() != map.size())
        throw UsageError("laplacian_variance: map/mask size mismatch");

    std::vector<double> values;
    for (int y = 1; y < height - 1; ++y)
        for (int x = 1; x < width - 1; ++x) {
            const int i = y * width + x;
            if (!mask[i] || !mask[i - 1] || !mask[i + 1] || !mask[i - width] ||
                !mask[i + width])
                continue;
            values.push_back(map[i - 1] + map[i + 1] + map[i - width] +
                             map[i + width] - 4.0 * map[i]);
        }
    if (values.empty())
        throw MetricError("laplacian_variance: no interior voxels");

    const Stats s = mean_std(values);
    return s.stddev * s.stddev;
}

double signal_mse(const std::vector<double>& predicted,
                  const std::vector<double>& reference) {
    if (predicted.size() != reference.size() || predicted.empty())
        throw UsageError("signal_mse: length mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < predicted.size(); ++i) {
        const double d = predicted[i] - reference[i];
        acc += d * d;
    }
    return acc / predicted.size();
}

Stats mean_std(const std::vector<double>& values) {
    Stats s;
    s.count = static_cast<int>(values.size());
    if (values.empty())
        return s;
    for (double v : values)
        s.mean += v;
    s.mean /= values.size();
    double var = 0.0;
    for (double v : values) {
        const double d = v - s.mean;
        var += d * d;
    }
    s.stddev = std::sqrt(var / values.size());
    return s;
}

MetricsReport evaluate_estimates(const VoxelGrid& grid,
                                 const std::vector<VoxelEstimate>& estimates,
                                 const std::string& method) {
    grid.validate();
    if (!grid.ground_truth)
        throw DataError("evaluate_estimates: dataset has no ground truth");
    const GroundTruth& gt = *grid.ground_truth;

    MetricsReport report;
    report.method = method;

    std::vector<double> re_cbf, re_at, re_t1b, mses;
    std::vector<double> cbf_map(grid.n_voxels(),
                                std::numeric_limits<double>::quiet_NaN());
    std::vector<double> at_map(grid.n_voxels(),
                               std::numeric_limits<double>::quiet_NaN());
    std::vector<std::uint8_t> ok_mask(grid.n_voxels(), 0);

    std::vector<const VoxelEstimate*> by_index(grid.n_voxels(), nullptr);
    for (const auto& e : estimates) {
        if (e.index < 0 || e.index >= grid.n_voxels())
            throw UsageError("evaluate_estimates: estimate index out of range");
        by_index[e.index] = &e;
    }

    for (int i : grid.masked_indices()) {
        const VoxelEstimate* e = by_index[i];
        if (!e || !e->fitted) {
            ++report.n_unfitted;
            continue;
        }
        ++report.n_voxels;

        const double cbf_true = gt.cbf_map[i];
        const double at_true = gt.at_map[i];
        if (cbf_true == 0.0) {
            ++report.n_excluded_zero_truth;
            continue;
        }

        MetricsReport::Detail d;
        d.index = i;
        d.cbf = e->cbf;
        d.at = e->at;
        d.t1b = e->t1b;
        d.converged = !convergence_failed(e->cbf, cbf_true);

        if (d.converged) {
            d.re_cbf = relative_error(e->cbf, cbf_true);
            d.re_at = relative_error(e->at, at_true);
            re_cbf.push_back(*d.re_cbf);
            re_at.push_back(*d.re_at);
            if (e->t1b) {
                d.re_t1b = relative_error(*e->t1b, gt.t1b);
                re_t1b.push_back(*d.re_t1b);
            }
            cbf_map[i] = e->cbf;
            at_map[i] = e->at;
            ok_mask[i] = 1;
        } else {
            ++report.n_failed;
        }

        if (!e->predicted_signal.empty()) {
            HaemodynamicParams truth{cbf_true, at_true, gt.t1b};
            std::vector<double> clean;
            clean.reserve(grid.spec.n_points());
            for (double t : grid.spec.times)
                clean.push_back(evaluate_signal(truth, t));
            d.mse = signal_mse(e->predicted_signal, clean);
            if (d.converged)
                mses.push_back(*d.mse);
        }
        report.details.push_back(std::move(d));
    }

    const int audited = report.n_voxels - report.n_excluded_zero_truth;
    report.convergence_rate =
        audited > 0
            ? 100.0 * std::abs(audited - report.n_failed) / audited
            : 0.0;

    report.re_cbf = mean_std(re_cbf);
    report.re_at = mean_std(re_at);
    report.re_t1b = mean_std(re_t1b);
    report.has_t1b = !re_t1b.empty();
    report.signal_mse_stats = mean_std(mses);

    try {
        report.laplacian_cbf = laplacian_variance(cbf_map, ok_mask, grid.width,
                                                  grid.height);
        report.laplacian_at = laplacian_variance(at_map, ok_mask, grid.width,
                                                 grid.height);
    } catch (const MetricError&) {
        // No interior voxels (tiny or fragmented converged set).
    }
    return report;
}

} // namespace asl
