#include <doctest.h>

#include <cmath>

#include "asl/phantom.hpp"
#include "asl/signal_model.hpp"

using namespace asl;

TEST_CASE("phantom: zero noise reproduces the closed form exactly") {
    PhantomConfig cfg;
    cfg.width = 4;
    cfg.height = 3;
    cfg.noise_std = 0.0;
    cfg.seed = 5;
    const auto g = generate_phantom(cfg);
    REQUIRE(g.ground_truth.has_value());
    for (int v : g.masked_indices()) {
        HaemodynamicParams p{g.ground_truth->cbf_map[v], g.ground_truth->at_map[v],
                             g.ground_truth->t1b};
        for (int k = 0; k < g.spec.n_points(); ++k)
            CHECK(g.signal[v].values[k] == evaluate_signal(p, g.spec.times[k]));
    }
}

TEST_CASE("phantom: determinism and seed sensitivity") {
    PhantomConfig cfg;
    cfg.width = 5;
    cfg.height = 5;
    cfg.noise_std = 0.3;
    cfg.seed = 42;
    const auto a = generate_phantom(cfg);
    const auto b = generate_phantom(cfg);
    CHECK(a == b);

    cfg.seed = 43;
    const auto c = generate_phantom(cfg);
    CHECK_FALSE(a == c);
}

TEST_CASE("phantom: noise std calibrated to the configured fraction of peak") {
    PhantomConfig cfg;
    cfg.width = 32;
    cfg.height = 32;
    cfg.noise_std = 0.5;
    cfg.seed = 9;
    const auto noisy = generate_phantom(cfg);
    cfg.noise_std = 0.0;
    const auto clean = generate_phantom(cfg); // same seed: same fields

    double peak = 0.0;
    for (int v : clean.masked_indices())
        for (double s : clean.signal[v].values)
            peak = std::max(peak, std::abs(s));

    // >= 1e4 residual samples for the law-of-large-numbers check.
    double acc = 0.0;
    int n = 0;
    for (int v : clean.masked_indices())
        for (int k = 0; k < clean.spec.n_points(); ++k) {
            const double r = noisy.signal[v].values[k] - clean.signal[v].values[k];
            acc += r * r;
            ++n;
        }
    REQUIRE(n >= 10000);
    const double sample_std = std::sqrt(acc / n);
    CHECK(sample_std == doctest::Approx(0.5 * peak).epsilon(0.05));
}

TEST_CASE("phantom: fields honour the configured ranges and grow smooth") {
    PhantomConfig cfg;
    cfg.width = 16;
    cfg.height = 16;
    cfg.smoothness_voxels = 2.0;
    cfg.seed = 31;
    const auto g = generate_phantom(cfg);
    const auto& gt = *g.ground_truth;
    for (int v : g.masked_indices()) {
        CHECK(gt.cbf_map[v] >= cfg.cbf_min);
        CHECK(gt.cbf_map[v] <= cfg.cbf_max);
        CHECK(gt.at_map[v] >= cfg.at_min);
        CHECK(gt.at_map[v] <= cfg.at_max);
    }

    // Neighbouring values should be closer than the full range.
    double max_jump = 0.0;
    for (int y = 0; y < g.height; ++y)
        for (int x = 1; x < g.width; ++x)
            max_jump = std::max(max_jump,
                                std::abs(gt.at_map[g.index(x, y)] -
                                         gt.at_map[g.index(x - 1, y)]));
    CHECK(max_jump < 0.5 * (cfg.at_max - cfg.at_min));
}

TEST_CASE("phantom: configuration validation") {
    PhantomConfig cfg;
    cfg.width = 0;
    CHECK_THROWS_AS(generate_phantom(cfg), ConfigError);
    cfg = PhantomConfig{};
    cfg.noise_std = -0.1;
    CHECK_THROWS_AS(generate_phantom(cfg), ConfigError);
    cfg = PhantomConfig{};
    cfg.cbf_max = cfg.cbf_min / 2.0;
    CHECK_THROWS_AS(generate_phantom(cfg), ConfigError);
}
