#include "asl/lsf.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "asl/signal_model.hpp"

namespace asl {

namespace {

constexpr double kAtLow = 1.0;
constexpr double kT1bLow = 200.0;
constexpr double kT1bHigh = 20000.0;

struct Model {
    double tau;
    const std::vector<double>& times;

    double eval(double cbf, double at, double t1b, double t) const {
        if (t < at)
            return 0.0;
        const double decay = std::exp(-t / t1b);
        if (t < at + tau)
            return cbf * (t - at) * decay;
        return cbf * tau * decay;
    }

    // Branch-wise analytic Jacobian row; at the boundaries the active
    // (later) branch's derivative is used.
    void jacobian(double cbf, double at, double t1b, double t, bool free_t1b,
                  double* row) const {
        if (t < at) {
            row[0] = row[1] = 0.0;
            if (free_t1b)
                row[2] = 0.0;
            return;
        }
        const double decay = std::exp(-t / t1b);
        if (t < at + tau) {
            row[0] = (t - at) * decay;
            row[1] = -cbf * decay;
            if (free_t1b)
                row[2] = cbf * (t - at) * decay * t / (t1b * t1b);
        } else {
            row[0] = tau * decay;
            row[1] = 0.0;
            if (free_t1b)
                row[2] = cbf * tau * decay * t / (t1b * t1b);
        }
    }
};

double median(std::vector<double> v) {
    const size_t n = v.size();
    std::nth_element(v.begin(), v.begin() + n / 2, v.end());
    double m = v[n / 2];
    if (n % 2 == 0) {
        std::nth_element(v.begin(), v.begin() + n / 2 - 1, v.end());
        m = 0.5 * (m + v[n / 2 - 1]);
    }
    return m;
}

// Huber weights from current residuals; returns false (all weights 1)
// when the scale collapses.
bool huber_weights(const Eigen::VectorXd& r, double huber_c, Eigen::VectorXd& w) {
    std::vector<double> absdev(r.size());
    const double med = median(std::vector<double>(r.data(), r.data() + r.size()));
    for (Eigen::Index i = 0; i < r.size(); ++i)
        absdev[i] = std::abs(r[i] - med);
    const double mad = median(absdev);
    const double delta = huber_c * mad;
    if (delta < 1e-12 * std::max(1.0, r.cwiseAbs().maxCoeff())) {
        w.setOnes(r.size());
        return false;
    }
    for (Eigen::Index i = 0; i < r.size(); ++i) {
        const double a = std::abs(r[i]);
        w[i] = a <= delta ? 1.0 : delta / a;
    }
    return true;
}

struct LmOutcome {
    Eigen::VectorXd theta;
    double cost = 0.0;
    bool improved = false;
    int iterations = 0;
};

// Weighted LM on theta = (cbf, at [, t1b]) with box clamps. Huber
// weights are refreshed after each accepted step.
LmOutcome levenberg_marquardt(const Model& model, const std::vector<double>& y,
                              Eigen::VectorXd theta, bool free_t1b,
                              const LsfConfig& cfg, double t_last) {
    const int n = static_cast<int>(y.size());
    const int p = free_t1b ? 3 : 2;
    const double t1b_fixed = free_t1b ? 0.0 : theta[2];

    auto clamp_theta = [&](Eigen::VectorXd& th) {
        th[0] = std::max(th[0], 0.0);
        th[1] = std::clamp(th[1], kAtLow, t_last);
        if (free_t1b)
            th[2] = std::clamp(th[2], kT1bLow, kT1bHigh);
    };
    clamp_theta(theta);

    Eigen::VectorXd r(n), w(n);
    Eigen::MatrixXd J(n, p);
    auto residuals = [&](const Eigen::VectorXd& th, Eigen::VectorXd& out) {
        const double t1b = free_t1b ? th[2] : t1b_fixed;
        for (int i = 0; i < n; ++i)
            out[i] = model.eval(th[0], th[1], t1b, model.times[i]) - y[i];
    };

    residuals(theta, r);
    w.setOnes();
    huber_weights(r, cfg.huber_c, w);
    double cost = (w.array() * r.array().square()).sum();
    const double initial_cost = cost;

    double lambda = 1e-3;
    LmOutcome out;
    out.theta = theta;
    Eigen::VectorXd r_try(n);

    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        ++out.iterations;
        const double t1b = free_t1b ? theta[2] : t1b_fixed;
        double row[3];
        for (int i = 0; i < n; ++i) {
            model.jacobian(theta[0], theta[1], t1b, model.times[i], free_t1b, row);
            for (int d = 0; d < p; ++d)
                J(i, d) = row[d];
        }

        const Eigen::MatrixXd Jw = w.asDiagonal() * J;
        Eigen::MatrixXd H = J.transpose() * Jw;
        const Eigen::VectorXd g = J.transpose() * (w.array() * r.array()).matrix();

        bool stepped = false;
        for (int attempt = 0; attempt < 12 && !stepped; ++attempt) {
            Eigen::MatrixXd Hl = H;
            for (int d = 0; d < p; ++d)
                Hl(d, d) += lambda * std::max(H(d, d), 1e-12);
            const Eigen::VectorXd step = Hl.ldlt().solve(-g);
            Eigen::VectorXd theta_try = theta + step;
            clamp_theta(theta_try);
            residuals(theta_try, r_try);
            const double cost_try = (w.array() * r_try.array().square()).sum();
            if (cost_try < cost) {
                const double rel_step =
                    (theta_try - theta).norm() / std::max(theta.norm(), 1e-12);
                theta = theta_try;
                r = r_try;
                cost = cost_try;
                lambda = std::max(lambda / 3.0, 1e-12);
                stepped = true;
                huber_weights(r, cfg.huber_c, w);
                cost = (w.array() * r.array().square()).sum();
                if (rel_step < cfg.step_tol)
                    iter = cfg.max_iterations; // converged
            } else {
                lambda *= 10.0;
            }
        }
        if (!stepped)
            break; // no downhill direction at any damping
    }

    out.theta = theta;
    out.cost = cost;
    out.improved = cost < initial_cost;
    return out;
}

// Linear least-squares amplitude for a unit-cbf template.
double initial_cbf(const Model& model, const std::vector<double>& y, double at,
                   double t1b) {
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        const double phi = model.eval(1.0, at, t1b, model.times[i]);
        num += phi * y[i];
        den += phi * phi;
    }
    return den > 0.0 ? std::max(num / den, 0.0) : 0.0;
}

} // namespace

std::vector<double> LsfConfig::default_at_grid() {
    std::vector<double> grid;
    for (double at = 300.0; at <= 2100.0; at += 300.0)
        grid.push_back(at);
    return grid;
}

LsfConfig::LsfConfig() : at_grid(default_at_grid()) {}

void LsfConfig::validate(const AcquisitionSpec& spec) const {
    if (at_grid.empty())
        throw ConfigError("LsfConfig: at_grid must not be empty");
    for (double at : at_grid)
        if (at <= 0.0 || at >= spec.last_time())
            throw ConfigError("LsfConfig: at_grid values must lie inside the window");
    if (max_iterations <= 0)
        throw ConfigError("LsfConfig: max_iterations must be positive");
    if (huber_c <= 0.0 || step_tol <= 0.0)
        throw ConfigError("LsfConfig: huber_c and step_tol must be positive");
}

FitResult fit_voxel_lsf(const PwiTimeSeries& series, const AcquisitionSpec& spec,
                        const LsfConfig& cfg, std::optional<double> t1b_fixed) {
    spec.validate();
    cfg.validate(spec);
    if (series.size() != spec.n_points())
        throw UsageError("fit_voxel_lsf: series length does not match spec");
    const bool free_t1b = cfg.mode == LsfConfig::Mode::FreeT1b;
    if (!free_t1b && !t1b_fixed)
        throw UsageError("fit_voxel_lsf: fixed-t1b mode requires t1b_fixed");

    const auto start_time = std::chrono::steady_clock::now();
    const double tau = HaemodynamicParams{}.tau;
    const Model model{tau, spec.times};
    const double t1b0 = free_t1b ? 1800.0 : *t1b_fixed;

    bool any_improved = false;
    bool have_best = false;
    LmOutcome best;
    for (double at0 : cfg.at_grid) {
        Eigen::VectorXd theta(3);
        theta << initial_cbf(model, series.values, at0, t1b0), at0, t1b0;
        LmOutcome run = levenberg_marquardt(model, series.values, theta, free_t1b,
                                            cfg, spec.last_time());
        any_improved = any_improved || run.improved;
        if (!have_best || run.cost < best.cost) {
            best = run;
            have_best = true;
        }
    }

    FitResult result;
    result.params.cbf = best.theta[0];
    result.params.at = best.theta[1];
    result.params.t1b = free_t1b ? best.theta[2] : t1b0;
    result.params.tau = tau;
    result.loss_history = {best.cost};
    result.predicted_signal.reserve(spec.n_points());
    for (double t : spec.times)
        result.predicted_signal.push_back(
            model.eval(result.params.cbf, result.params.at, result.params.t1b, t));
    // A perfect starting guess leaves nothing to improve; zero final cost
    // still counts as converged.
    result.converged = any_improved || best.cost <= 1e-20;
    result.wall_time_s = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start_time)
                             .count();
    return result;
}

FitResult fit_lsf_multi(const VoxelGrid& grid, const BranchSelection& sel,
                        const LsfConfig& cfg) {
    grid.validate();
    const std::array<int, 3> voxels{sel.target, sel.companions[0], sel.companions[1]};
    for (int v : voxels)
        if (v < 0 || v >= grid.n_voxels() || !grid.mask[v])
            throw UsageError("fit_lsf_multi: selection voxel outside mask");

    LsfConfig free_cfg = cfg;
    free_cfg.mode = LsfConfig::Mode::FreeT1b;

    double cbf = 0.0, at = 0.0, t1b = 0.0;
    int used = 0;
    for (int v : voxels) {
        const FitResult r = fit_voxel_lsf(grid.signal[v], grid.spec, free_cfg);
        if (!r.converged)
            continue;
        cbf += r.params.cbf;
        at += r.params.at;
        t1b += r.params.t1b;
        ++used;
    }

    FitResult result;
    result.params.tau = HaemodynamicParams{}.tau;
    if (used > 0) {
        result.params.cbf = cbf / used;
        result.params.at = at / used;
        result.params.t1b = t1b / used;
        result.converged = true;
    } else {
        // All fits failed: report the target's best-effort parameters.
        const FitResult fallback = fit_voxel_lsf(grid.signal[sel.target], grid.spec,
                                                 free_cfg);
        result.params = fallback.params;
        result.converged = false;
    }
    const Model model{result.params.tau, grid.spec.times};
    result.predicted_signal.reserve(grid.spec.n_points());
    for (double t : grid.spec.times)
        result.predicted_signal.push_back(
            model.eval(result.params.cbf, result.params.at, result.params.t1b, t));
    return result;
}

LsfMaps ground_truth_from_lsf(const VoxelGrid& grid, double t1b) {
    grid.validate();
    if (!(t1b > 0.0))
        throw ConfigError("ground_truth_from_lsf: t1b must be positive");

    const int n = grid.n_voxels();
    LsfMaps maps;
    maps.cbf_map.assign(n, std::numeric_limits<double>::quiet_NaN());
    maps.at_map.assign(n, std::numeric_limits<double>::quiet_NaN());
    maps.converged.assign(n, 0);

    LsfConfig cfg;
    cfg.mode = LsfConfig::Mode::FixedT1b;
    for (int v : grid.masked_indices()) {
        const FitResult r = fit_voxel_lsf(grid.signal[v], grid.spec, cfg, t1b);
        maps.cbf_map[v] = r.params.cbf;
        maps.at_map[v] = r.params.at;
        maps.converged[v] = r.converged ? 1 : 0;
    }
    return maps;
}

} // namespace asl
