#pragma once

#include <functional>
#include <vector>

#include "asl/grid.hpp"
#include "asl/pinn_graph.hpp"

namespace asl {

/// Per-voxel estimation outcome.
struct FitResult {
    HaemodynamicParams params;
    std::vector<double> loss_history;
    std::vector<double> predicted_signal; // model output at acquisition times
    bool converged = false;
    double wall_time_s = 0.0;
};

/// Mean squared physics residual (1/N) sum_i (dsdt(t_i) - f(t_i))^2 in
/// raw units (a.u./ms squared), where f is the smoothed ODE derivative
/// at the given parameter values. The generic overload accepts any
/// ds/dt callable, which lets tests plug in the closed-form solution.
double ode_residual_loss(const std::function<double(double)>& dsdt,
                         const HaemodynamicParams& params,
                         const std::vector<double>& collocation_times,
                         const SmoothingConfig& smoothing);

double ode_residual_loss(const MlpPinn& net, const TrainablePhysical& phys,
                         const std::vector<double>& collocation_times,
                         const SmoothingConfig& smoothing);

/// Weighted data MSE (1/N) sum_i (w_i * (s_hat(t_i) - s_i))^2 in raw
/// signal units; the weight multiplies the residual inside the square.
double data_loss(const std::vector<double>& predicted, const PwiTimeSeries& series,
                 const std::vector<double>& weights);

double data_loss(const MlpPinn& net, const PwiTimeSeries& series,
                 const AcquisitionSpec& spec, const std::vector<double>& weights);

/// Baseline per-voxel PINN fit: composite loss over the smoothed
/// physics residual and the (unweighted) data term, trained with the
/// three-tier schedule. Deterministic per cfg.seed. Throws FitDiverged
/// on a non-finite loss.
FitResult fit_voxel_pinn(const PwiTimeSeries& series, const AcquisitionSpec& spec,
                         const TrainConfig& cfg);

/// Heuristic initial physical parameters for a voxel: at = 900 ms,
/// t1b = 1800 ms, cbf from the peak-signal amplitude.
TrainablePhysical init_physical(const PwiTimeSeries& series,
                                const AcquisitionSpec& spec, double tau);

/// Per-voxel output normalisation constant: max |signal|, floored away
/// from zero so degenerate all-zero voxels stay well defined.
double signal_norm(const PwiTimeSeries& series);

} // namespace asl
