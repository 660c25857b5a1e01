#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include <boost/random/normal_distribution.hpp>

#include "sepgd/dataset.hpp"

namespace sepgd {

/// ln(1 + e^z) without overflow for large z or cancellation for very negative z.
inline double softplus(double z) {
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

/// 1 / (1 + e^{-z}), evaluated on the side that cannot overflow.
inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// Signed margin y_i <x_i, w>.
inline double sample_margin(const Weights& w, const Dataset& data, std::size_t i) {
    return data.label(i) * detail::dot(data.row(i), w.values);
}

inline double sample_loss(const Weights& w, const Dataset& data, std::size_t i) {
    data.require_dim(w.size(), "sample_loss");
    data.require_index(i, "sample_loss");
    return softplus(-sample_margin(w, data, i));
}

/// Mean logistic loss. Summed left to right over samples, so the result is
/// bit-identical to averaging `sample_loss` in index order.
inline double full_loss(const Weights& w, const Dataset& data) {
    data.require_dim(w.size(), "full_loss");
    double sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) sum += softplus(-sample_margin(w, data, i));
    return sum / static_cast<double>(data.size());
}

/// Gradient of the i-th sample loss: sigma(-m_i) * (-y_i x_i).
inline Vector sample_gradient(const Weights& w, const Dataset& data, std::size_t i) {
    data.require_dim(w.size(), "sample_gradient");
    data.require_index(i, "sample_gradient");
    const double coef = -data.label(i) * sigmoid(-sample_margin(w, data, i));
    Vector g(data.dim(), 0.0);
    detail::axpy(coef, data.row(i), g);
    return g;
}

struct LossAndGradient {
    double loss = 0.0;
    Vector gradient;
};

/// One pass computing both the mean loss and its gradient. `loss` matches
/// `full_loss` bit for bit.
inline LossAndGradient loss_and_gradient(const Weights& w, const Dataset& data) {
    data.require_dim(w.size(), "loss_and_gradient");
    LossAndGradient out;
    out.gradient.assign(data.dim(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double m = sample_margin(w, data, i);
        sum += softplus(-m);
        detail::axpy(-data.label(i) * sigmoid(-m), data.row(i), out.gradient);
    }
    const double n = static_cast<double>(data.size());
    out.loss = sum / n;
    for (double& g : out.gradient) g /= n;
    return out;
}

inline Vector full_gradient(const Weights& w, const Dataset& data) {
    return loss_and_gradient(w, data).gradient;
}

/// Mean exponential loss F(w) = (1/n) sum exp(-y_i <x_i, w>).
inline double exp_loss_mean(const Weights& w, const Dataset& data) {
    data.require_dim(w.size(), "exp_loss_mean");
    double sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double z = -sample_margin(w, data, i);
        if (z > 700.0)
            throw RangeError("exp_loss_mean: exp(" + std::to_string(z) + ") at sample " +
                             std::to_string(i) + " overflows");
        sum += std::exp(z);
    }
    return sum / static_cast<double>(data.size());
}

/// Largest eigenvalue of the logistic-loss Hessian
///   H(w) = (1/n) sum x_i x_i^T sigma(m_i) sigma(-m_i)
/// by power iteration. H is never formed; products are taken sample by sample.
/// Stops once the eigen-residual ||Hv - lambda v|| falls below tol * lambda.
inline double hessian_max_eigenvalue(const Weights& w, const Dataset& data, double tol,
                                     std::size_t max_iterations = 10000,
                                     std::uint64_t seed = 0x5eed) {
    if (!(tol > 0.0)) throw InvalidInput("hessian_max_eigenvalue: tol must be positive");
    data.require_dim(w.size(), "hessian_max_eigenvalue");
    const std::size_t n = data.size();
    const std::size_t d = data.dim();

    Vector curvature(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double m = sample_margin(w, data, i);
        curvature[i] = sigmoid(m) * sigmoid(-m);
    }
    auto apply = [&](const Vector& v, Vector& out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (curvature[i] == 0.0) continue;
            detail::axpy(curvature[i] * detail::dot(data.row(i), v), data.row(i), out);
        }
        for (double& x : out) x /= static_cast<double>(n);
    };

    std::mt19937_64 rng(seed);
    boost::random::normal_distribution<double> normal;
    Vector v(d);
    for (double& x : v) x = normal(rng);
    double nv = detail::norm(v);
    for (double& x : v) x /= nv;

    Vector hv(d);
    for (std::size_t it = 0; it < max_iterations; ++it) {
        apply(v, hv);
        const double lambda = detail::dot(v, hv);
        const double nh = detail::norm(hv);
        if (nh == 0.0) return 0.0;
        double residual = 0.0;
        for (std::size_t k = 0; k < d; ++k) residual += (hv[k] - lambda * v[k]) * (hv[k] - lambda * v[k]);
        residual = std::sqrt(residual);
        if (residual <= tol * lambda) return lambda;
        for (std::size_t k = 0; k < d; ++k) v[k] = hv[k] / nh;
    }
    throw NumericError("hessian_max_eigenvalue: power iteration did not converge after " +
                       std::to_string(max_iterations) + " iterations");
}

}  // namespace sepgd
