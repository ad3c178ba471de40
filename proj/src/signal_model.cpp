#include "asl/signal_model.hpp"

#include <cmath>

namespace asl {

void HaemodynamicParams::validate() const {
    if (!(cbf >= 0.0) || !std::isfinite(cbf))
        throw ConfigError("HaemodynamicParams: cbf must be finite and >= 0");
    if (!(at > 0.0) || !std::isfinite(at))
        throw ConfigError("HaemodynamicParams: at must be finite and > 0");
    if (!(t1b > 0.0) || !std::isfinite(t1b))
        throw ConfigError("HaemodynamicParams: t1b must be finite and > 0");
    if (!(tau > 0.0) || !std::isfinite(tau))
        throw ConfigError("HaemodynamicParams: tau must be finite and > 0");
}

AcquisitionSpec AcquisitionSpec::standard(int n_points, double spacing) {
    if (n_points <= 0 || spacing <= 0.0)
        throw ConfigError("AcquisitionSpec: n_points and spacing must be positive");
    AcquisitionSpec s;
    s.times.reserve(n_points);
    for (int i = 0; i < n_points; ++i)
        s.times.push_back(spacing * (i + 1));
    return s;
}

void AcquisitionSpec::validate() const {
    if (times.empty())
        throw ConfigError("AcquisitionSpec: no sample times");
    if (times.front() <= 0.0)
        throw ConfigError("AcquisitionSpec: sample times must be positive");
    for (size_t i = 1; i < times.size(); ++i)
        if (times[i] <= times[i - 1])
            throw ConfigError("AcquisitionSpec: sample times must be strictly increasing");
}

void SmoothingConfig::validate() const {
    if (!(sharpness_k > 0.0))
        throw ConfigError("SmoothingConfig: sharpness_k must be > 0");
}

double evaluate_signal(const HaemodynamicParams& p, double t) {
    p.validate();
    if (t < p.at)
        return 0.0;
    const double decay = std::exp(-t / p.t1b);
    if (t < p.at + p.tau)
        return p.cbf * (t - p.at) * decay;
    return p.cbf * p.tau * decay;
}

double evaluate_ode_rhs_exact(const HaemodynamicParams& p, double t) {
    p.validate();
    if (t < p.at)
        return 0.0;
    const double decay = std::exp(-t / p.t1b);
    if (t < p.at + p.tau)
        return p.cbf * decay * (1.0 - (t - p.at) / p.t1b);
    return -p.cbf * decay * (p.tau / p.t1b);
}

namespace {

inline double sig(double x, double k) { return 0.5 * (1.0 + std::tanh(k * x)); }

// Smoothed RHS without validation, for the integrator's inner loop.
inline double smoothed_rhs(const HaemodynamicParams& p, double t, double k) {
    const double decay = std::exp(-t / p.t1b);
    const double b2 = p.cbf * decay * (1.0 - (t - p.at) / p.t1b);
    const double b3 = -p.cbf * decay * (p.tau / p.t1b);
    const double g1 = sig(t - p.at, k) * sig(p.at + p.tau - t, k);
    const double g2 = sig(t - p.at - p.tau, k);
    return g1 * b2 + g2 * b3;
}

} // namespace

double evaluate_ode_rhs_smoothed(const HaemodynamicParams& p, double t,
                                 const SmoothingConfig& cfg) {
    p.validate();
    cfg.validate();
    return smoothed_rhs(p, t, cfg.sharpness_k);
}

std::vector<double> integrate_smoothed_ode(const HaemodynamicParams& p,
                                           const SmoothingConfig& cfg,
                                           const AcquisitionSpec& spec,
                                           double step_ms) {
    p.validate();
    cfg.validate();
    spec.validate();
    if (!(step_ms > 0.0))
        throw ConfigError("integrate_smoothed_ode: step must be > 0");
    for (size_t i = 0; i < spec.times.size(); ++i) {
        const double gap = spec.times[i] - (i == 0 ? 0.0 : spec.times[i - 1]);
        if (step_ms > gap)
            throw ConfigError("integrate_smoothed_ode: step exceeds sample spacing");
    }

    const double k = cfg.sharpness_k;
    std::vector<double> out;
    out.reserve(spec.times.size());

    double s = 0.0;
    double t = 0.0;
    for (double t_next : spec.times) {
        const double len = t_next - t;
        const int n = static_cast<int>(std::ceil(len / step_ms));
        const double h = len / n;
        for (int i = 0; i < n; ++i) {
            // The RHS depends on t only, so the RK4 stages reduce to
            // Simpson-style quadrature of the derivative.
            const double k1 = smoothed_rhs(p, t, k);
            const double k2 = smoothed_rhs(p, t + 0.5 * h, k);
            const double k4 = smoothed_rhs(p, t + h, k);
            s += (h / 6.0) * (k1 + 4.0 * k2 + k4);
            t += h;
        }
        t = t_next; // avoid drift from repeated addition
        out.push_back(s);
    }
    return out;
}

} // namespace asl
