#include <doctest.h>

#include <cmath>
#include <random>

#include "asl/signal_model.hpp"

using namespace asl;

namespace {
const HaemodynamicParams kRef{0.01, 600.0, 1800.0, 900.0};
}

TEST_CASE("closed-form signal: branch values") {
    // Before arrival.
    CHECK(evaluate_signal(kRef, 300.0) == 0.0);
    // Inflow branch: 0.01 * 600 * exp(-2/3).
    CHECK(evaluate_signal(kRef, 1200.0) ==
          doctest::Approx(6.0 * std::exp(-2.0 / 3.0)).epsilon(1e-12));
    CHECK(evaluate_signal(kRef, 1200.0) == doctest::Approx(3.0805027).epsilon(1e-7));
    // Plateau-decay branch: 0.01 * 900 * exp(-10/9).
    CHECK(evaluate_signal(kRef, 2000.0) ==
          doctest::Approx(9.0 * std::exp(-10.0 / 9.0)).epsilon(1e-12));
    CHECK(evaluate_signal(kRef, 2000.0) == doctest::Approx(2.9627369).epsilon(1e-7));
}

TEST_CASE("closed-form signal: continuity at branch boundaries") {
    for (double eps : {1.0, 0.1, 1e-3, 1e-6}) {
        const double jump_at = std::abs(evaluate_signal(kRef, kRef.at + eps) -
                                        evaluate_signal(kRef, kRef.at - eps));
        const double jump_end =
            std::abs(evaluate_signal(kRef, kRef.at + kRef.tau + eps) -
                     evaluate_signal(kRef, kRef.at + kRef.tau - eps));
        CHECK(jump_at <= 0.03 * eps); // |dS/dt| is bounded by ~cbf near AT
        CHECK(jump_end <= 0.03 * eps);
    }
}

TEST_CASE("closed-form signal: linear in cbf") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        HaemodynamicParams p{0.005 + 0.015 * u(rng), 400.0 + 1000.0 * u(rng),
                             1400.0 + 1000.0 * u(rng)};
        HaemodynamicParams p2 = p;
        p2.cbf *= 2.0;
        const double t = 3600.0 * u(rng);
        CHECK(evaluate_signal(p2, t) == doctest::Approx(2.0 * evaluate_signal(p, t)));
        CHECK(evaluate_ode_rhs_exact(p2, t) ==
              doctest::Approx(2.0 * evaluate_ode_rhs_exact(p, t)));
    }
}

TEST_CASE("exact derivative: branch values and right continuity") {
    CHECK(evaluate_ode_rhs_exact(kRef, 300.0) == 0.0);
    CHECK(evaluate_ode_rhs_exact(kRef, 1200.0) ==
          doctest::Approx(0.01 * std::exp(-2.0 / 3.0) * (1.0 - 600.0 / 1800.0))
              .epsilon(1e-12));
    CHECK(evaluate_ode_rhs_exact(kRef, 1200.0) ==
          doctest::Approx(0.0034228).epsilon(1e-4));
    CHECK(evaluate_ode_rhs_exact(kRef, 2000.0) ==
          doctest::Approx(-0.01 * std::exp(-10.0 / 9.0) * 0.5).epsilon(1e-12));
    CHECK(evaluate_ode_rhs_exact(kRef, 2000.0) ==
          doctest::Approx(-0.0016460).epsilon(1e-4));

    // At the boundaries the later branch applies.
    CHECK(evaluate_ode_rhs_exact(kRef, kRef.at) ==
          doctest::Approx(0.01 * std::exp(-600.0 / 1800.0)).epsilon(1e-12));
    CHECK(evaluate_ode_rhs_exact(kRef, kRef.at + kRef.tau) ==
          doctest::Approx(-0.01 * std::exp(-1500.0 / 1800.0) * 0.5).epsilon(1e-12));
}

TEST_CASE("exact derivative matches finite differences of the signal") {
    const double h = 0.25;
    for (double t = 5.0; t <= 3600.0; t += 7.0) {
        if (std::abs(t - kRef.at) <= 1.0 || std::abs(t - kRef.at - kRef.tau) <= 1.0)
            continue;
        if (std::abs(t - kRef.at) <= h || std::abs(t - kRef.at - kRef.tau) <= h)
            continue; // stencil must not straddle a kink
        const double fd =
            (evaluate_signal(kRef, t + h) - evaluate_signal(kRef, t - h)) / (2.0 * h);
        const double rhs = evaluate_ode_rhs_exact(kRef, t);
        CHECK(fd == doctest::Approx(rhs).epsilon(1e-4).scale(1e-7));
    }
}

TEST_CASE("smoothed derivative: saturation far from transitions") {
    const SmoothingConfig cfg; // k = 0.05
    for (double t : {100.0, 400.0, 900.0, 1200.0, 2000.0, 3000.0, 3600.0}) {
        if (std::abs(t - kRef.at) * cfg.sharpness_k <= 10.0 ||
            std::abs(t - kRef.at - kRef.tau) * cfg.sharpness_k <= 10.0)
            continue;
        const double sm = evaluate_ode_rhs_smoothed(kRef, t, cfg);
        const double ex = evaluate_ode_rhs_exact(kRef, t);
        CHECK(sm == doctest::Approx(ex).epsilon(1e-6).scale(1e-12));
    }
}

TEST_CASE("smoothed derivative: half weight at the arrival transition") {
    const SmoothingConfig cfg;
    const double b2_at_transition = 0.01 * std::exp(-600.0 / 1800.0); // branch 2 at t=AT
    CHECK(evaluate_ode_rhs_smoothed(kRef, kRef.at, cfg) ==
          doctest::Approx(0.5 * b2_at_transition).epsilon(1e-6));
}

TEST_CASE("smoothed derivative: deviation localized near the transitions") {
    const SmoothingConfig cfg;
    double max_dev_inside = 0.0, max_dev_outside = 0.0;
    for (double t = 0.0; t <= 3600.0; t += 1.0) {
        const double dev = std::abs(evaluate_ode_rhs_smoothed(kRef, t, cfg) -
                                    evaluate_ode_rhs_exact(kRef, t));
        const bool near = std::abs(t - kRef.at) <= 100.0 ||
                          std::abs(t - kRef.at - kRef.tau) <= 100.0;
        (near ? max_dev_inside : max_dev_outside) = std::max(
            near ? max_dev_inside : max_dev_outside, dev);
    }
    CHECK(max_dev_inside > 100.0 * max_dev_outside);
}

TEST_CASE("RK4 oracle reproduces the closed form within 2% of peak") {
    const SmoothingConfig cfg;
    const auto spec = AcquisitionSpec::standard();
    const auto integrated = integrate_smoothed_ode(kRef, cfg, spec, 1.0);
    REQUIRE(integrated.size() == 12);

    double peak = 0.0;
    for (double t : spec.times)
        peak = std::max(peak, std::abs(evaluate_signal(kRef, t)));
    for (size_t i = 0; i < integrated.size(); ++i) {
        const double ref = evaluate_signal(kRef, spec.times[i]);
        CHECK(std::abs(integrated[i] - ref) <= 0.02 * peak);
    }
}

TEST_CASE("RK4 oracle: zero perfusion and cbf linearity") {
    const SmoothingConfig cfg;
    const auto spec = AcquisitionSpec::standard();

    HaemodynamicParams zero = kRef;
    zero.cbf = 0.0;
    for (double s : integrate_smoothed_ode(zero, cfg, spec, 1.0))
        CHECK(s == 0.0);

    HaemodynamicParams twice = kRef;
    twice.cbf *= 2.0;
    const auto base = integrate_smoothed_ode(kRef, cfg, spec, 1.0);
    const auto doubled = integrate_smoothed_ode(twice, cfg, spec, 1.0);
    for (size_t i = 0; i < base.size(); ++i)
        CHECK(doubled[i] == doctest::Approx(2.0 * base[i]).epsilon(1e-12));
}

TEST_CASE("parameter and configuration validation") {
    HaemodynamicParams bad = kRef;
    bad.at = -1.0;
    CHECK_THROWS_AS(evaluate_signal(bad, 100.0), ConfigError);
    bad = kRef;
    bad.t1b = 0.0;
    CHECK_THROWS_AS(evaluate_ode_rhs_exact(bad, 100.0), ConfigError);
    bad = kRef;
    bad.cbf = -0.01;
    CHECK_THROWS_AS(evaluate_signal(bad, 100.0), ConfigError);

    const SmoothingConfig cfg;
    CHECK_THROWS_AS(integrate_smoothed_ode(kRef, cfg, AcquisitionSpec::standard(), 0.0),
                    ConfigError);
    CHECK_THROWS_AS(integrate_smoothed_ode(kRef, cfg, AcquisitionSpec::standard(), 500.0),
                    ConfigError);
    CHECK_THROWS_AS(evaluate_ode_rhs_smoothed(kRef, 100.0, SmoothingConfig{0.0}),
                    ConfigError);
}
