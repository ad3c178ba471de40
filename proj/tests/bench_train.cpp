// Micro-benchmark for the training inner loop; not part of the test suite.
#include <chrono>
#include <cstdio>

#include "asl/pinn.hpp"
#include "asl/signal_model.hpp"

using namespace asl;

int main(int argc, char** argv) {
    const int iters = argc > 1 ? std::atoi(argv[1]) : 2000;

    const HaemodynamicParams truth{0.01, 600.0, 1800.0, 900.0};
    const auto spec = AcquisitionSpec::standard();
    PwiTimeSeries series;
    for (double t : spec.times)
        series.values.push_back(evaluate_signal(truth, t));

    MlpPinn net(1, spec.last_time(), signal_norm(series));
    TrainablePhysical phys = init_physical(series, spec, truth.tau);
    const auto colloc = uniform_collocation(121, spec.last_time());
    const std::vector<double> w(spec.n_points(), 1.0);

    ad::Tape tape;
    BranchVars v = record_branch(tape, net, phys, ad::Var{}, colloc, spec.times,
                                 series.values, w, truth.tau, 0.05, 0.005);

    std::vector<ad::Var> params = v.network_params();
    params.push_back(v.raw_cbf);
    params.push_back(v.raw_at);
    params.push_back(v.raw_t1b);
    Adam opt(tape, params, 1e-3);

    const auto start = std::chrono::steady_clock::now();
    double last = 0.0;
    for (int i = 0; i < iters; ++i) {
        tape.forward();
        last = tape.scalar(v.loss);
        tape.backward(v.loss);
        opt.step();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::printf("nodes=%d iters=%d total=%.3fs per_iter=%.1fus loss=%.6g\n",
                tape.size(), iters, secs, 1e6 * secs / iters, last);
    std::printf("extrapolated 50k-iteration fit: %.2fs\n", secs / iters * 50000.0);
    return 0;
}
