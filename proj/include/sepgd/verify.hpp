#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <boost/random/uniform_real_distribution.hpp>

#include "sepgd/analysis.hpp"
#include "sepgd/data_gen.hpp"
#include "sepgd/loss.hpp"
#include "sepgd/optimizers.hpp"
#include "sepgd/schedule.hpp"

namespace sepgd {

struct PropertyResult {
    std::string name;
    bool passed = false;
    std::string detail;  ///< witness on failure, summary on success
};

struct VerifyReport {
    std::vector<PropertyResult> properties;

    bool passed() const {
        for (const auto& p : properties)
            if (!p.passed) return false;
        return true;
    }
    const PropertyResult* find(const std::string& name) const {
        for (const auto& p : properties)
            if (p.name == name) return &p;
        return nullptr;
    }
};

struct VerifyOptions {
    std::size_t draws = 100;
    std::uint64_t seed = 1;
    std::size_t gd_steps = 200;
    std::size_t sgd_cap = 2000;
    double hessian_tol = 1e-10;
    /// Schedule steps simulated past tau2 for the growth sandwich.
    std::size_t schedule_tail = 2000;
};

inline constexpr double kFiniteDifferenceRelTol = 1e-6;
inline constexpr double kHessianSlack = 1e-8;

/// Relative error of the analytic gradient against central differences with
/// step h = 1e-5 (1 + ||w||).
inline double finite_difference_error(const Weights& w, const Dataset& data) {
    const Vector g = full_gradient(w, data);
    const double h = 1e-5 * (1.0 + w.norm());
    Weights wp = w, wm = w;
    double err2 = 0.0, ref2 = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        wp[k] = w[k] + h;
        wm[k] = w[k] - h;
        const double fd = (full_loss(wp, data) - full_loss(wm, data)) / (2.0 * h);
        wp[k] = wm[k] = w[k];
        err2 += (fd - g[k]) * (fd - g[k]);
        ref2 += g[k] * g[k];
    }
    const double ref = std::sqrt(ref2);
    return ref > 0.0 ? std::sqrt(err2) / ref : std::sqrt(err2);
}

/// Runs the invariant suite on a dataset. Properties that need a margin use
/// `cert` when given, otherwise a perceptron estimate. Exceptions inside a
/// property are reported as that property failing.
inline VerifyReport verify_dataset(const Dataset& data, const std::optional<MarginCertificate>& cert,
                                   const VerifyOptions& opts = {}) {
    VerifyReport report;
    auto check = [&](const std::string& name, const std::function<PropertyResult()>& body) {
        try {
            PropertyResult r = body();
            r.name = name;
            report.properties.push_back(std::move(r));
        } catch (const std::exception& e) {
            report.properties.push_back({name, false, std::string("error: ") + e.what()});
        }
    };

    const std::size_t d = data.dim();
    std::mt19937_64 rng(opts.seed);
    boost::random::uniform_real_distribution<double> coord(-20.0, 20.0);
    auto random_weights = [&](double scale) {
        Weights w = Weights::zeros(d);
        for (std::size_t k = 0; k < d; ++k) w[k] = coord(rng) * scale;
        return w;
    };

    check("normalized_features", [&] {
        const auto bad = data.first_unnormalized_row();
        if (bad)
            return PropertyResult{"", false,
                                  "row " + std::to_string(*bad) + " has norm " +
                                      detail::fmt(detail::norm(data.row(*bad))) + " > 1"};
        return PropertyResult{"", true, "max row norm " + detail::fmt(data.max_row_norm())};
    });

    std::optional<MarginCertificate> margin = cert;
    check("certificate_margin", [&] {
        if (!margin) {
            margin = estimate_margin(data, 10000);
            return PropertyResult{"", true, "no certificate supplied; perceptron estimate gamma = " +
                                                detail::fmt(margin->margin)};
        }
        const double m = verify_margin(data, *margin);
        if (m < margin->margin)
            return PropertyResult{"", false,
                                  "min margin " + detail::fmt(m) + " < claimed gamma " + detail::fmt(margin->margin)};
        return PropertyResult{"", true, "min margin " + detail::fmt(m) + " >= gamma " + detail::fmt(margin->margin)};
    });

    check("loss_decomposition", [&] {
        for (std::size_t k = 0; k < opts.draws; ++k) {
            const Weights w = random_weights(1.0 / std::sqrt(static_cast<double>(d)));
            double sum = 0.0;
            for (std::size_t i = 0; i < data.size(); ++i) sum += sample_loss(w, data, i);
            const double mean = sum / static_cast<double>(data.size());
            if (mean != full_loss(w, data))
                return PropertyResult{"", false, "draw " + std::to_string(k) + ": mean of sample losses " +
                                                     detail::fmt(mean) + " != " + detail::fmt(full_loss(w, data))};
        }
        return PropertyResult{"", true, std::to_string(opts.draws) + " draws, bit-identical"};
    });

    check("self_bounded_gradient", [&] {
        for (std::size_t k = 0; k < opts.draws; ++k) {
            const Weights w = random_weights(1.0);
            const double g = detail::norm(full_gradient(w, data));
            const double l = full_loss(w, data);
            if (g > std::min(1.0, l) * (1.0 + 1e-12))
                return PropertyResult{"", false, "draw " + std::to_string(k) + ": |grad| = " + detail::fmt(g) +
                                                     " > min{1, L} with L = " + detail::fmt(l)};
        }
        return PropertyResult{"", true, std::to_string(opts.draws) + " draws"};
    });

    check("gradient_finite_difference", [&] {
        double worst = 0.0;
        for (std::size_t k = 0; k < opts.draws; ++k) {
            const Weights w = random_weights(0.25 / std::sqrt(static_cast<double>(d)));
            const double e = finite_difference_error(w, data);
            worst = std::max(worst, e);
            if (e > kFiniteDifferenceRelTol)
                return PropertyResult{"", false, "draw " + std::to_string(k) + ": relative error " + detail::fmt(e)};
        }
        return PropertyResult{"", true, "worst relative error " + detail::fmt(worst)};
    });

    check("hessian_loss_bound", [&] {
        const std::size_t draws = std::min<std::size_t>(opts.draws, 20);
        for (std::size_t k = 0; k < draws; ++k) {
            const Weights w = random_weights(0.25 / std::sqrt(static_cast<double>(d)));
            const double lam = hessian_max_eigenvalue(w, data, opts.hessian_tol);
            const double bound = std::min(0.25, full_loss(w, data)) + kHessianSlack;
            if (lam > bound)
                return PropertyResult{"", false, "draw " + std::to_string(k) + ": lambda_max " + detail::fmt(lam) +
                                                     " > min{1/4, L} = " + detail::fmt(bound)};
        }
        return PropertyResult{"", true, std::to_string(draws) + " draws"};
    });

    check("schedule_growth", [&] {
        if (!margin) throw InvalidInput("no margin available");
        const double gamma = margin->margin;
        const double eta0 = initial_eta(Weights::zeros(d));
        ScheduleState s = run_until_crossings(gamma, eta0, 1.0, 10'000'000);
        if (!s.tau2) return PropertyResult{"", false, "tau2 not reached within 1e7 steps"};
        const CrossingBrackets br = crossing_time_brackets(gamma * gamma * eta0, 1.0, gamma);
        if (!br.tau1_contains(*s.tau1) || !br.tau2_contains(*s.tau2))
            return PropertyResult{"", false, "tau1 = " + std::to_string(*s.tau1) + ", tau2 = " +
                                                 std::to_string(*s.tau2) + " outside analytic brackets"};
        const GrowthConstants k = growth_constants(gamma, gamma * gamma * eta0, 1.0, s.t, s.S);
        for (std::size_t step = 0; step < opts.schedule_tail; ++step) {
            s = advance(s);
            const double l = s.log_S();
            if (!growth_sandwich(k, s.t).contains(l * l * l, kSandwichSlack))
                return PropertyResult{"", false, "ln^3 S outside sandwich at t = " + std::to_string(s.t)};
        }
        return PropertyResult{"", true, "tau1 = " + std::to_string(*s.tau1) + ", tau2 = " + std::to_string(*s.tau2)};
    });

    check("gd_stability", [&] {
        if (!margin) throw InvalidInput("no margin available");
        Dataset plain = data;
        plain.clear_certificate();
        GdOptions gd_opts;
        gd_opts.fail_fast = false;
        const GdScheduleRun run = run_gd_schedule(plain, margin->margin, Weights::zeros(d), opts.gd_steps, gd_opts);
        const GdAudit a = audit_gd_run(run);
        const std::size_t bad = a.stability_violations + a.monotone_violations + a.stable_phase_violations;
        if (bad > 0)
            return PropertyResult{"", false, std::to_string(bad) + " violations; first at t = " +
                                                 std::to_string(a.first_failure->t) + ": " + a.first_failure->what};
        return PropertyResult{"", true, std::to_string(opts.gd_steps) + " steps, terminal loss " +
                                            detail::fmt(run.trace.records.back().loss)};
    });

    check("sgd_drift_audit", [&] {
        if (!margin) throw InvalidInput("no margin available");
        Dataset audited = data;
        audited.set_certificate(*margin);
        const double eps = 0.1 * full_loss(Weights::zeros(d), data);
        SgdOptions sgd_opts;
        sgd_opts.audit = true;
        const SgdRun run = run_adaptive_sgd(audited, eps, opts.seed, opts.sgd_cap, sgd_opts);
        return PropertyResult{"", true, std::to_string(run.drift->steps_checked) +
                                            " steps audited, max pathwise excess " +
                                            detail::fmt(run.drift->max_pathwise_excess)};
    });

    return report;
}

}  // namespace sepgd
