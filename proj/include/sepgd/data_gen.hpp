#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>

#include "sepgd/dataset.hpp"

namespace sepgd {

/// Parameters of a synthetic separable dataset.
struct GenSpec {
    std::size_t dim = 1;
    std::size_t count = 1;
    double margin = 0.1;
    std::uint64_t seed = 0;

    void validate() const {
        if (dim < 1) throw InvalidInput("GenSpec: dim must be >= 1");
        if (count < 1) throw InvalidInput("GenSpec: count must be >= 1");
        if (!(margin > 0.0 && margin < 1.0))
            throw InvalidInput("GenSpec: margin must lie in (0, 1), got " + std::to_string(margin));
    }
};

/// Synthetic data with an exact margin certificate.
///
/// Randomness: std::mt19937_64 seeded with `spec.seed`, normals from
/// boost::random::normal_distribution (ziggurat; identical on every platform).
///
/// Construction: draw a unit direction w*, then per sample a point z uniform in
/// the unit ball. Its component p = <z, w*> is pushed away from the hyperplane
/// to p' = sign(p) (g + (1 - g)|p|), and the orthogonal part is shrunk so that
/// p'^2 + |r'|^2 <= 1. The label is sign(p'), so y <x, w*> = |p'| >= g.
/// g is the requested margin inflated by a few ulps so rounding in the stored
/// features cannot pull a margin below `spec.margin`.
inline Dataset generate_separable(const GenSpec& spec) {
    spec.validate();
    const std::size_t d = spec.dim;
    const std::size_t n = spec.count;

    std::mt19937_64 rng(spec.seed);
    boost::random::normal_distribution<double> normal;
    boost::random::uniform_01<double> uniform;

    auto random_unit = [&](Vector& v) {
        double nrm = 0.0;
        do {
            for (double& x : v) x = normal(rng);
            nrm = detail::norm(v);
        } while (nrm == 0.0);
        for (double& x : v) x /= nrm;
    };

    Vector w_star(d);
    random_unit(w_star);

    const double g = spec.margin * (1.0 + 1e-12);
    const double shrink = 1.0 - 1e-12;

    Vector features(n * d);
    Vector labels(n);
    Vector z(d);
    for (std::size_t i = 0; i < n; ++i) {
        random_unit(z);
        const double radius = std::pow(uniform(rng), 1.0 / static_cast<double>(d));
        for (double& x : z) x *= radius;

        const double p = detail::dot(z, w_star);
        const double sign = p >= 0.0 ? 1.0 : -1.0;
        const double p_new = sign * std::min(1.0, g + (1.0 - g) * std::abs(p));

        // orthogonal remainder r = z - p w*, |r|^2 <= 1 - p^2
        double* x = features.data() + i * d;
        double r2 = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            x[k] = z[k] - p * w_star[k];
            r2 += x[k] * x[k];
        }
        const double room = std::max(0.0, 1.0 - p_new * p_new);
        const double scale = r2 > 0.0 ? std::min(1.0, std::sqrt(room / r2)) * shrink : 0.0;
        for (std::size_t k = 0; k < d; ++k) x[k] = scale * x[k] + p_new * w_star[k];
        labels[i] = sign;
    }

    Dataset data(n, d, std::move(features), std::move(labels));
    data.set_certificate(MarginCertificate{std::move(w_star), spec.margin});
    return data;
}

/// min_i y_i <x_i, direction>; the certificate holds iff this is >= its margin.
inline double verify_margin(const Dataset& data, const MarginCertificate& cert) {
    data.require_dim(cert.direction.size(), "verify_margin");
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < data.size(); ++i)
        m = std::min(m, data.label(i) * detail::dot(data.row(i), cert.direction));
    return m;
}

/// Perceptron-based certificate. The returned margin is the realized minimum
/// margin of the normalized perceptron solution, which lower-bounds the
/// maximum margin. Throws NotSeparable if no epoch is mistake-free.
inline MarginCertificate estimate_margin(const Dataset& data, std::size_t max_epochs) {
    const std::size_t d = data.dim();
    Vector w(d, 0.0);
    for (std::size_t epoch = 0; epoch < max_epochs; ++epoch) {
        std::size_t mistakes = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (data.label(i) * detail::dot(data.row(i), w) <= 0.0) {
                detail::axpy(data.label(i), data.row(i), w);
                ++mistakes;
            }
        }
        if (mistakes == 0) {
            const double nrm = detail::norm(w);
            for (double& x : w) x /= nrm;
            // renormalize once more so |w| = 1 within rounding of the validator
            const double nrm2 = detail::norm(w);
            for (double& x : w) x /= nrm2;
            MarginCertificate cert{std::move(w), 0.0};
            cert.margin = verify_margin(data, cert);
            if (!(cert.margin > 0.0)) break;
            return cert;
        }
    }
    throw NotSeparable("estimate_margin: no separating direction found within " +
                       std::to_string(max_epochs) + " perceptron epochs");
}

// --------------------------------------------------------------------------
// CSV

struct CsvOptions {
    bool skip_header = false;
    /// Divide all features by the largest row norm when it exceeds one.
    bool normalize = true;
};

struct LoadedCsv {
    Dataset data;
    /// Factor every feature was divided by (1 when no rescaling happened).
    double scale = 1.0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline double parse_double(std::string_view field, std::size_t line, std::size_t column) {
    field = trim(field);
    // from_chars rejects a leading '+', accept it for convenience
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
        throw ParseError(line, "column " + std::to_string(column) + ": '" + std::string(field) +
                                   "' is not a number");
    if (!std::isfinite(v))
        throw ParseError(line, "column " + std::to_string(column) + ": non-finite value");
    return v;
}

}  // namespace detail

/// Parses `label,f1,...,fd` rows. Labels in {0,1} or {-1,+1} map to {-1,+1}.
inline LoadedCsv parse_csv(std::istream& in, const CsvOptions& opts = {}) {
    std::string line;
    std::size_t line_no = 0;
    std::size_t d = 0;
    Vector features;
    Vector labels;
    if (opts.skip_header) {
        std::getline(in, line);
        ++line_no;
    }
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = detail::trim(line);
        if (view.empty()) continue;

        std::size_t column = 0;
        std::size_t values = 0;
        std::size_t pos = 0;
        while (true) {
            const std::size_t comma = view.find(',', pos);
            const std::string_view field =
                view.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
            const double v = detail::parse_double(field, line_no, column + 1);
            if (column == 0) {
                if (v == 1.0)
                    labels.push_back(1.0);
                else if (v == 0.0 || v == -1.0)
                    labels.push_back(-1.0);
                else
                    throw ParseError(line_no, "label '" + std::string(detail::trim(field)) +
                                                  "' is not one of 0, 1, -1, +1");
            } else {
                features.push_back(v);
                ++values;
            }
            ++column;
            if (comma == std::string_view::npos) break;
            pos = comma + 1;
        }
        if (values == 0) throw ParseError(line_no, "row has a label but no features");
        if (d == 0)
            d = values;
        else if (values != d)
            throw ParseError(line_no, "row has " + std::to_string(values) +
                                          " features, expected " + std::to_string(d));
    }
    if (labels.empty()) throw ParseError(line_no, "no data rows");

    const std::size_t n = labels.size();
    double scale = 1.0;
    if (opts.normalize) {
        double max_norm = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            max_norm = std::max(max_norm, detail::norm({features.data() + i * d, d}));
        if (max_norm > 1.0) {
            scale = max_norm;
            for (double& x : features) x /= scale;
        }
    }
    return LoadedCsv{Dataset(n, d, std::move(features), std::move(labels)), scale};
}

inline LoadedCsv load_csv(const std::string& path, const CsvOptions& opts = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return parse_csv(in, opts);
}

/// Writes `label,f1,...,fd` with round-trip precision.
inline void write_csv(std::ostream& out, const Dataset& data) {
    out << std::setprecision(17);
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << (data.label(i) > 0 ? "1" : "-1");
        for (double x : data.row(i)) out << ',' << x;
        out << '\n';
    }
}

}  // namespace sepgd
