#include "asl/pinn.hpp"

#include <chrono>
#include <cmath>

#include "asl/signal_model.hpp"

namespace asl {

using ad::Mat;
using ad::Tape;
using ad::Var;

void TrainConfig::validate() const {
    if (!(gamma > 0.0))
        throw ConfigError("TrainConfig: gamma must be > 0");
    if (n_collocation < 2)
        throw ConfigError("TrainConfig: need at least 2 collocation points");
    for (int it : tier_iters)
        if (it <= 0)
            throw ConfigError("TrainConfig: tier iteration counts must be > 0");
    for (double lr : tier_lrs)
        if (!(lr > 0.0))
            throw ConfigError("TrainConfig: learning rates must be > 0");
}

FitDiverged::FitDiverged(int iteration_, const HaemodynamicParams& at_failure)
    : std::runtime_error("fit aborted: non-finite loss at iteration " +
                         std::to_string(iteration_)),
      iteration(iteration_), params_at_failure(at_failure) {}

std::vector<double> uniform_collocation(int n, double t_max) {
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i)
        t[i] = t_max * i / (n - 1);
    return t;
}

BranchVars record_branch(Tape& tp, const MlpPinn& net, const TrainablePhysical& phys,
                         Var raw_t1b_shared, const std::vector<double>& colloc_times,
                         const std::vector<double>& data_times,
                         const std::vector<double>& data_values,
                         const std::vector<double>& data_weights, double tau,
                         double sharpness_k, double gamma, double ode_weight) {
    if (data_times.size() != data_values.size() ||
        data_times.size() != data_weights.size())
        throw UsageError("record_branch: data arrays must have equal length");

    const double t_norm = net.t_norm;
    const double s_norm = net.s_norm;
    const double k = sharpness_k;

    BranchVars v;
    v.w1 = tp.leaf(net.w1);
    v.b1 = tp.leaf(net.b1);
    v.w2 = tp.leaf(net.w2);
    v.b2 = tp.leaf(net.b2);
    v.w3 = tp.leaf(net.w3);
    v.b3 = tp.leaf(net.b3);
    v.raw_cbf = tp.leaf(phys.raw_cbf);
    v.raw_at = tp.leaf(phys.raw_at);
    v.raw_t1b = raw_t1b_shared.valid() ? raw_t1b_shared : tp.leaf(phys.raw_t1b);

    const Var cbf = tp.scale(tp.exp(v.raw_cbf), phys.cbf_scale);
    const Var at = tp.scale(tp.exp(v.raw_at), phys.at_scale);
    const Var t1b = tp.scale(tp.exp(v.raw_t1b), phys.t1b_scale);

    // Network + tangent chain shared by both evaluation batches.
    auto record_net = [&](const Mat& u_row, bool tangent, Var& n_out, Var& ndot_out) {
        const Var u = tp.constant(u_row);
        const Var a1 = tp.add_col(tp.matmul(v.w1, u), v.b1);
        const Var h1 = tp.tanh(a1);
        const Var a2 = tp.add_col(tp.matmul(v.w2, h1), v.b2);
        const Var h2 = tp.tanh(a2);
        n_out = tp.add_col(tp.matmul(v.w3, h2), v.b3);
        if (!tangent)
            return;
        const Var d1 = tp.one_minus_square(h1);
        const Var d2 = tp.one_minus_square(h2);
        const Var w1b = tp.matmul(v.w1, tp.constant(Mat::Ones(1, u_row.cols())));
        const Var t1 = tp.mul(d1, w1b);
        const Var t2 = tp.mul(d2, tp.matmul(v.w2, t1));
        ndot_out = tp.matmul(v.w3, t2);
    };

    // ---- physics residual over the collocation batch ----
    const int nc = static_cast<int>(colloc_times.size());
    Mat t_row(1, nc);
    for (int i = 0; i < nc; ++i)
        t_row(0, i) = colloc_times[i];
    const Mat u_row = t_row / t_norm;
    Mat g_row, gp_row;
    ad::fast_tanh(u_row, g_row); // output gate tanh(u): constant per batch
    gp_row = 1.0 - g_row.array().square();

    Var n_c, ndot_c;
    record_net(u_row, true, n_c, ndot_c);
    const Var dsdu = tp.add(tp.mul(tp.constant(gp_row), n_c),
                            tp.mul(tp.constant(g_row), ndot_c));

    const Var t_c = tp.constant(t_row);
    const Var decay = tp.exp(tp.neg(tp.div(t_c, t1b)));
    const Var branch2 = tp.mul(tp.mul(cbf, decay),
                               tp.shift(tp.neg(tp.div(tp.sub(t_c, at), t1b)), 1.0));
    const Var branch3 = tp.neg(tp.mul(tp.mul(cbf, decay), tp.div(tp.constant(tau), t1b)));
    const Var gate12 = tp.mul(tp.sig_gate(tp.sub(t_c, at), k),
                              tp.sig_gate(tp.sub(tp.shift(at, tau), t_c), k));
    const Var gate23 = tp.sig_gate(tp.sub(t_c, tp.shift(at, tau)), k);
    const Var f_ms = tp.add(tp.mul(gate12, branch2), tp.mul(gate23, branch3));

    const Var residual = tp.sub(dsdu, tp.scale(f_ms, t_norm / s_norm));
    v.loss_ode = tp.mean_all(tp.square(residual));

    // ---- weighted data term ----
    const int nd = static_cast<int>(data_times.size());
    Mat td_row(1, nd), sd_row(1, nd), w_row(1, nd);
    for (int i = 0; i < nd; ++i) {
        td_row(0, i) = data_times[i];
        sd_row(0, i) = data_values[i] / s_norm;
        w_row(0, i) = data_weights[i];
    }
    const Mat ud_row = td_row / t_norm;
    Mat gd_row;
    ad::fast_tanh(ud_row, gd_row);

    // When every data time sits on the collocation grid (true for the
    // default protocol) the network values are gathered from the batch
    // already computed; otherwise a second evaluation is recorded.
    std::vector<int> data_idx;
    data_idx.reserve(nd);
    for (int i = 0; i < nd; ++i) {
        int found = -1;
        for (int j = 0; j < nc; ++j)
            if (colloc_times[j] == data_times[i]) {
                found = j;
                break;
            }
        if (found < 0)
            break;
        data_idx.push_back(found);
    }

    Var n_d;
    if (static_cast<int>(data_idx.size()) == nd) {
        n_d = tp.gather_cols(n_c, data_idx);
    } else {
        Var unused;
        record_net(ud_row, false, n_d, unused);
    }
    v.shat_data = tp.mul(tp.constant(gd_row), n_d);
    const Var rd = tp.sub(v.shat_data, tp.constant(sd_row));
    v.loss_data = tp.mean_all(tp.square(tp.mul(tp.constant(w_row), rd)));

    v.loss = tp.add(tp.scale(v.loss_ode, ode_weight),
                    tp.scale(v.loss_data, gamma));
    return v;
}

TrainableGrads grads_wrt_trainables(Tape& tape, Var loss, const BranchVars& branch,
                                    const TrainablePhysical& phys) {
    tape.backward(loss);
    TrainableGrads g;
    g.w1 = tape.grad(branch.w1);
    g.b1 = tape.grad(branch.b1);
    g.w2 = tape.grad(branch.w2);
    g.b2 = tape.grad(branch.b2);
    g.w3 = tape.grad(branch.w3);
    g.b3 = tape.grad(branch.b3);
    g.raw_cbf = phys.cbf_frozen ? 0.0 : tape.grad(branch.raw_cbf)(0, 0);
    g.raw_at = phys.at_frozen ? 0.0 : tape.grad(branch.raw_at)(0, 0);
    g.raw_t1b = phys.t1b_frozen ? 0.0 : tape.grad(branch.raw_t1b)(0, 0);
    return g;
}

Adam::Adam(Tape& tape, std::vector<Var> params, double lr, double beta1, double beta2,
           double eps)
    : tape_(tape), params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
      eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Var p : params_) {
        const Mat& val = tape_.value(p);
        m_.push_back(Mat::Zero(val.rows(), val.cols()));
        v_.push_back(Mat::Zero(val.rows(), val.cols()));
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params_.size(); ++i) {
        const Mat& g = tape_.grad(params_[i]);
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
        v_[i] = beta2_ * v_[i].array() + (1.0 - beta2_) * g.array().square();
        tape_.value_mut(params_[i]).array() -=
            lr_ * (m_[i].array() / bc1) /
            ((v_[i].array() / bc2).sqrt() + eps_);
    }
}

void run_tiers(Tape& tape, Var loss, const std::vector<Var>& network_params,
               const std::vector<Var>& physical_params, const TrainConfig& cfg,
               std::vector<double>& loss_history,
               const std::function<HaemodynamicParams()>& snapshot) {
    cfg.validate();
    loss_history.reserve(loss_history.size() + cfg.audit_horizon());

    int iteration = 0;
    for (int tier = 0; tier < 3; ++tier) {
        std::vector<Var> trainables = network_params;
        if (tier > 0)
            trainables.insert(trainables.end(), physical_params.begin(),
                              physical_params.end());
        Adam opt(tape, trainables, cfg.tier_lrs[tier]);
        for (int i = 0; i < cfg.tier_iters[tier]; ++i, ++iteration) {
            tape.forward();
            const double l = tape.scalar(loss);
            loss_history.push_back(l);
            if (!std::isfinite(l))
                throw FitDiverged(iteration, snapshot());
            tape.backward(loss);
            opt.step();
        }
    }
    tape.forward(); // leave values consistent with the final parameters
}

double signal_norm(const PwiTimeSeries& series) {
    double peak = 0.0;
    for (double v : series.values)
        peak = std::max(peak, std::abs(v));
    return std::max(peak, 1e-12);
}

TrainablePhysical init_physical(const PwiTimeSeries& series, const AcquisitionSpec& spec,
                                double tau) {
    if (series.size() != spec.n_points())
        throw UsageError("init_physical: series length does not match spec");
    TrainablePhysical phys;
    phys.at_scale = 900.0;
    phys.t1b_scale = 1800.0;

    double peak = 0.0, t_peak = spec.times.back();
    for (int i = 0; i < series.size(); ++i) {
        if (std::abs(series.values[i]) > peak) {
            peak = std::abs(series.values[i]);
            t_peak = spec.times[i];
        }
    }
    // Invert the plateau branch at the peak sample for a starting cbf.
    const double denom = tau * std::exp(-t_peak / phys.t1b_scale);
    phys.cbf_scale = std::max(peak / denom, 1e-12);
    return phys;
}

double ode_residual_loss(const std::function<double(double)>& dsdt,
                         const HaemodynamicParams& params,
                         const std::vector<double>& collocation_times,
                         const SmoothingConfig& smoothing) {
    if (collocation_times.empty())
        throw UsageError("ode_residual_loss: no collocation points");
    double acc = 0.0;
    for (double t : collocation_times) {
        const double r = dsdt(t) - evaluate_ode_rhs_smoothed(params, t, smoothing);
        acc += r * r;
    }
    return acc / collocation_times.size();
}

double ode_residual_loss(const MlpPinn& net, const TrainablePhysical& phys,
                         const std::vector<double>& collocation_times,
                         const SmoothingConfig& smoothing) {
    HaemodynamicParams p{phys.cbf(), phys.at(), phys.t1b()};
    return ode_residual_loss([&](double t) { return net.grad_wrt_time(t); }, p,
                             collocation_times, smoothing);
}

double data_loss(const std::vector<double>& predicted, const PwiTimeSeries& series,
                 const std::vector<double>& weights) {
    if (predicted.size() != series.values.size() ||
        weights.size() != series.values.size())
        throw UsageError("data_loss: length mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < predicted.size(); ++i) {
        const double r = weights[i] * (predicted[i] - series.values[i]);
        acc += r * r;
    }
    return acc / predicted.size();
}

double data_loss(const MlpPinn& net, const PwiTimeSeries& series,
                 const AcquisitionSpec& spec, const std::vector<double>& weights) {
    return data_loss(net.forward_batch(spec.times), series, weights);
}

FitResult fit_voxel_pinn(const PwiTimeSeries& series, const AcquisitionSpec& spec,
                         const TrainConfig& cfg) {
    cfg.validate();
    spec.validate();
    if (series.size() != spec.n_points())
        throw UsageError("fit_voxel_pinn: series length does not match spec");

    const auto start = std::chrono::steady_clock::now();
    const double tau = HaemodynamicParams{}.tau;
    const SmoothingConfig smoothing;

    MlpPinn net(cfg.seed, spec.last_time(), signal_norm(series));
    TrainablePhysical phys = init_physical(series, spec, tau);

    Tape tape;
    const auto colloc = uniform_collocation(cfg.n_collocation, spec.last_time());
    const std::vector<double> unit_weights(spec.n_points(), 1.0);
    BranchVars branch = record_branch(tape, net, phys, Var{}, colloc, spec.times,
                                      series.values, unit_weights, tau,
                                      smoothing.sharpness_k, cfg.gamma);

    auto params_now = [&]() {
        return HaemodynamicParams{
            phys.cbf_scale * std::exp(tape.scalar(branch.raw_cbf)),
            phys.at_scale * std::exp(tape.scalar(branch.raw_at)),
            phys.t1b_scale * std::exp(tape.scalar(branch.raw_t1b)), tau};
    };

    std::vector<Var> physical;
    if (!phys.cbf_frozen)
        physical.push_back(branch.raw_cbf);
    if (!phys.at_frozen)
        physical.push_back(branch.raw_at);
    if (!phys.t1b_frozen)
        physical.push_back(branch.raw_t1b);

    FitResult result;
    run_tiers(tape, branch.loss, branch.network_params(), physical, cfg,
              result.loss_history, params_now);

    result.params = params_now();

    MlpPinn trained = net;
    trained.w1 = tape.value(branch.w1);
    trained.b1 = tape.value(branch.b1);
    trained.w2 = tape.value(branch.w2);
    trained.b2 = tape.value(branch.b2);
    trained.w3 = tape.value(branch.w3);
    trained.b3 = tape.value(branch.b3);
    result.predicted_signal = trained.forward_batch(spec.times);
    result.converged = true;
    result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

} // namespace asl
