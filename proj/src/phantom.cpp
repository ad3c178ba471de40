#include "asl/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "asl/signal_model.hpp"

namespace asl {

void PhantomConfig::validate() const {
    if (width <= 0 || height <= 0)
        throw ConfigError("PhantomConfig: grid dimensions must be positive");
    if (!(cbf_min > 0.0) || !(cbf_max >= cbf_min))
        throw ConfigError("PhantomConfig: cbf range must be positive and ordered");
    if (!(at_min > 0.0) || !(at_max >= at_min))
        throw ConfigError("PhantomConfig: at range must be positive and ordered");
    if (!(t1b > 0.0))
        throw ConfigError("PhantomConfig: t1b must be positive");
    if (smoothness_voxels < 0.0)
        throw ConfigError("PhantomConfig: smoothness must be >= 0");
    if (noise_std < 0.0)
        throw ConfigError("PhantomConfig: noise_std must be >= 0");
    spec.validate();
}

namespace {

// Separable Gaussian blur with reflected borders.
std::vector<double> gaussian_blur(const std::vector<double>& in, int w, int h,
                                  double sigma) {
    if (sigma <= 0.0)
        return in;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        norm += kernel[i + radius];
    }
    for (double& k : kernel)
        k /= norm;

    auto reflect = [](int i, int n) {
        while (i < 0 || i >= n) {
            if (i < 0)
                i = -i - 1;
            if (i >= n)
                i = 2 * n - i - 1;
        }
        return i;
    };

    std::vector<double> tmp(in.size()), out(in.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * in[y * w + reflect(x + i, w)];
            tmp[y * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * tmp[reflect(y + i, h) * w + x];
            out[y * w + x] = acc;
        }
    return out;
}

// Maps a field into [lo, hi] by min-max normalisation. A constant field
// (possible when the filter width exceeds the grid) maps to the midpoint.
void map_to_range(std::vector<double>& f, double lo, double hi) {
    const auto [mn_it, mx_it] = std::minmax_element(f.begin(), f.end());
    const double mn = *mn_it, mx = *mx_it;
    if (mx - mn < 1e-12) {
        std::fill(f.begin(), f.end(), 0.5 * (lo + hi));
        return;
    }
    for (double& v : f)
        v = lo + (hi - lo) * (v - mn) / (mx - mn);
}

} // namespace

VoxelGrid generate_phantom(const PhantomConfig& cfg) {
    cfg.validate();

    const int n = cfg.width * cfg.height;
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::vector<double> cbf_field(n), at_field(n);
    for (double& v : cbf_field)
        v = unif(rng);
    for (double& v : at_field)
        v = unif(rng);
    cbf_field = gaussian_blur(cbf_field, cfg.width, cfg.height, cfg.smoothness_voxels);
    at_field = gaussian_blur(at_field, cfg.width, cfg.height, cfg.smoothness_voxels);
    map_to_range(cbf_field, cfg.cbf_min, cfg.cbf_max);
    map_to_range(at_field, cfg.at_min, cfg.at_max);

    VoxelGrid grid;
    grid.width = cfg.width;
    grid.height = cfg.height;
    grid.spec = cfg.spec;
    grid.mask.assign(n, 1);
    grid.signal.resize(n);

    double peak = 0.0;
    for (int i = 0; i < n; ++i) {
        HaemodynamicParams p{cbf_field[i], at_field[i], cfg.t1b};
        auto& values = grid.signal[i].values;
        values.reserve(grid.spec.n_points());
        for (double t : grid.spec.times) {
            const double s = evaluate_signal(p, t);
            values.push_back(s);
            peak = std::max(peak, std::abs(s));
        }
    }

    if (cfg.noise_std > 0.0) {
        std::normal_distribution<double> noise(0.0, cfg.noise_std * peak);
        for (int i = 0; i < n; ++i)
            for (double& v : grid.signal[i].values)
                v += noise(rng);
    }

    GroundTruth gt;
    gt.cbf_map = std::move(cbf_field);
    gt.at_map = std::move(at_field);
    gt.t1b = cfg.t1b;
    grid.ground_truth = std::move(gt);

    grid.validate();
    return grid;
}

} // namespace asl
