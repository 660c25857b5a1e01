#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sepgd/errors.hpp"

namespace sepgd {

using Vector = std::vector<double>;

/// Row norms may exceed one by this much after floating-point rescaling.
inline constexpr double kNormSlack = 1e-12;

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t k = 0; k < x.size(); ++k) y[k] += alpha * x[k];
}

inline bool all_finite(std::span<const double> a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace detail

/// Model parameters w.
struct Weights {
    Vector values;

    Weights() = default;
    explicit Weights(Vector v) : values(std::move(v)) {}

    static Weights zeros(std::size_t d) { return Weights(Vector(d, 0.0)); }

    std::size_t size() const noexcept { return values.size(); }
    double norm() const { return detail::norm(values); }
    bool finite() const { return detail::all_finite(values); }

    double operator[](std::size_t k) const { return values[k]; }
    double& operator[](std::size_t k) { return values[k]; }

    friend bool operator==(const Weights&, const Weights&) = default;
};

/// Witness of linear separability: unit direction w* and margin gamma with
/// y_i <x_i, w*> >= gamma for every sample.
struct MarginCertificate {
    Vector direction;
    double margin = 0.0;

    void validate() const {
        if (!(margin > 0.0) || !std::isfinite(margin))
            throw InvalidInput("margin certificate: margin must be positive and finite");
        if (direction.empty()) throw InvalidInput("margin certificate: empty direction");
        const double nrm = detail::norm(direction);
        if (std::abs(nrm - 1.0) > 1e-12)
            throw InvalidInput("margin certificate: direction norm " + std::to_string(nrm) +
                               " is not 1");
    }

    friend bool operator==(const MarginCertificate&, const MarginCertificate&) = default;
};

/// n samples in d dimensions, row-major, labels in {-1, +1}.
///
/// The constructor checks shapes and labels. Row normalization is checked
/// separately (see `max_row_norm` / `require_normalized`) so that verification
/// tooling can load and report on a dataset that violates it.
class Dataset {
public:
    Dataset() = default;

    Dataset(std::size_t n, std::size_t d, Vector features, Vector labels,
            std::optional<MarginCertificate> certificate = std::nullopt)
        : n_(n), d_(d), features_(std::move(features)), labels_(std::move(labels)),
          certificate_(std::move(certificate)) {
        if (n_ == 0 || d_ == 0) throw InvalidInput("dataset: n and d must be positive");
        if (features_.size() != n_ * d_)
            throw InvalidInput("dataset: feature buffer has " + std::to_string(features_.size()) +
                               " entries, expected n*d = " + std::to_string(n_ * d_));
        if (labels_.size() != n_)
            throw InvalidInput("dataset: label count " + std::to_string(labels_.size()) +
                               " does not match n = " + std::to_string(n_));
        for (std::size_t i = 0; i < n_; ++i)
            if (labels_[i] != 1.0 && labels_[i] != -1.0)
                throw InvalidInput("dataset: label at row " + std::to_string(i) +
                                   " is not -1 or +1");
        if (!detail::all_finite(features_)) throw InvalidInput("dataset: non-finite feature");
        if (certificate_) set_certificate(*certificate_);
    }

    std::size_t size() const noexcept { return n_; }
    std::size_t dim() const noexcept { return d_; }

    std::span<const double> row(std::size_t i) const {
        return {features_.data() + i * d_, d_};
    }
    double label(std::size_t i) const { return labels_[i]; }

    const Vector& features() const noexcept { return features_; }
    const Vector& labels() const noexcept { return labels_; }

    const std::optional<MarginCertificate>& certificate() const noexcept { return certificate_; }

    void set_certificate(MarginCertificate cert) {
        cert.validate();
        if (cert.direction.size() != d_)
            throw InvalidInput("certificate dimension " + std::to_string(cert.direction.size()) +
                               " does not match data dimension " + std::to_string(d_));
        certificate_ = std::move(cert);
    }
    void clear_certificate() { certificate_.reset(); }

    double max_row_norm() const {
        double m = 0.0;
        for (std::size_t i = 0; i < n_; ++i) m = std::max(m, detail::norm(row(i)));
        return m;
    }

    /// Index of the first row with norm above 1 (+slack), if any.
    std::optional<std::size_t> first_unnormalized_row() const {
        for (std::size_t i = 0; i < n_; ++i)
            if (detail::norm(row(i)) > 1.0 + kNormSlack) return i;
        return std::nullopt;
    }

    void require_normalized() const {
        if (auto i = first_unnormalized_row())
            throw InvalidInput("dataset: row " + std::to_string(*i) + " has norm " +
                               std::to_string(detail::norm(row(*i))) + " > 1");
    }

    void require_dim(std::size_t d, const char* what) const {
        if (d != d_)
            throw InvalidInput(std::string(what) + ": dimension " + std::to_string(d) +
                               " does not match data dimension " + std::to_string(d_));
    }

    void require_index(std::size_t i, const char* what) const {
        if (i >= n_)
            throw InvalidInput(std::string(what) + ": index " + std::to_string(i) +
                               " out of range [0, " + std::to_string(n_) + ")");
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;

private:
    std::size_t n_ = 0;
    std::size_t d_ = 0;
    Vector features_;
    Vector labels_;
    std::optional<MarginCertificate> certificate_;
};

}  // namespace sepgd
