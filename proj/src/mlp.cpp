#include "asl/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace asl {

namespace {

double fast_tanh_scalar(double x) {
    const double e = std::exp(-2.0 * std::clamp(x, -19.0, 19.0));
    return (1.0 - e) / (1.0 + e);
}

void glorot_fill(ad::Mat& m, double fan_in, double fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            m(r, c) = dist(rng);
}

} // namespace

MlpPinn::MlpPinn(std::uint64_t seed, double t_norm_, double s_norm_)
    : w1(kHidden, 1), b1(ad::Mat::Zero(kHidden, 1)), w2(kHidden, kHidden),
      b2(ad::Mat::Zero(kHidden, 1)), w3(1, kHidden), b3(ad::Mat::Zero(1, 1)),
      t_norm(t_norm_), s_norm(s_norm_) {
    std::mt19937_64 rng(seed);
    glorot_fill(w1, 1, kHidden, rng);
    glorot_fill(w2, kHidden, kHidden, rng);
    glorot_fill(w3, kHidden, 1, rng);
}

double MlpPinn::forward(double t) const {
    const double u = t / t_norm;
    ad::Mat a1 = w1 * u + b1;
    ad::Mat h1;
    ad::fast_tanh(a1, h1);
    ad::Mat a2 = w2 * h1 + b2;
    ad::Mat h2;
    ad::fast_tanh(a2, h2);
    const double n = (w3 * h2)(0, 0) + b3(0, 0);
    return s_norm * fast_tanh_scalar(u) * n;
}

double MlpPinn::grad_wrt_time(double t) const {
    const double u = t / t_norm;
    ad::Mat a1 = w1 * u + b1;
    ad::Mat h1;
    ad::fast_tanh(a1, h1);
    ad::Mat a2 = w2 * h1 + b2;
    ad::Mat h2;
    ad::fast_tanh(a2, h2);
    const double n = (w3 * h2)(0, 0) + b3(0, 0);

    // Tangent pass: d/du of each activation, with du/du = 1.
    ad::Mat t1 = (1.0 - h1.array().square()).matrix().cwiseProduct(w1);
    ad::Mat t2 = (1.0 - h2.array().square()).matrix().cwiseProduct(w2 * t1);
    const double n_dot = (w3 * t2)(0, 0);

    const double g = fast_tanh_scalar(u);
    return s_norm * ((1.0 - g * g) * n + g * n_dot) / t_norm;
}

std::vector<double> MlpPinn::forward_batch(const std::vector<double>& times) const {
    std::vector<double> out;
    out.reserve(times.size());
    for (double t : times)
        out.push_back(forward(t));
    return out;
}

} // namespace asl
