#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sepgd/optimizers.hpp"
#include "sepgd/schedule.hpp"

namespace sepgd {

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::size_t points = 0;
};

/// Ordinary least squares y ~ slope * x + intercept.
inline LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidInput("fit_line: need two or more paired points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
        syy += (y[k] - my) * (y[k] - my);
    }
    if (sxx == 0.0) throw InvalidInput("fit_line: x has zero variance");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    fit.points = x.size();
    return fit;
}

/// Fit of ln S_t against t^{1/3} over t in [from, to] of a schedule-GD trace.
inline LinearFit fit_growth(const std::vector<TraceRecord>& records, std::size_t from, std::size_t to) {
    std::vector<double> x, y;
    for (const auto& r : records) {
        if (r.t < from || r.t > to || !r.S) continue;
        x.push_back(std::cbrt(static_cast<double>(r.t)));
        y.push_back(std::log(*r.S));
    }
    return fit_line(x, y);
}

/// Result of auditing a schedule-GD trace against the deterministic bounds.
struct GdAudit {
    std::size_t stability_violations = 0;  ///< loss * eta > 1 + 1e-10
    std::size_t monotone_violations = 0;   ///< loss went up by more than 1e-12
    std::size_t stable_phase_violations = 0;
    std::size_t sandwich_violations = 0;
    std::size_t sandwich_checked = 0;
    std::size_t pointwise_violations = 0;  ///< 2 ln^2 S_{t-1} / S_{t-1} after tau2
    double worst_stability = 0.0;          ///< max loss * eta
    double worst_stable_phase_ratio = 0.0; ///< max loss / bound
    std::optional<Violation> first_failure;
};

inline constexpr double kStablePhaseRelSlack = 1e-10;
inline constexpr double kSandwichSlack = 1e-9;

/// Re-checks every per-iteration inequality on a recorded run. `records[t]`
/// must hold iterate t, with S filled in.
inline GdAudit audit_gd_run(const GdScheduleRun& run) {
    GdAudit a;
    const auto& rec = run.trace.records;
    auto note = [&](std::size_t t, std::string what) {
        if (!a.first_failure) a.first_failure = Violation{t, std::move(what)};
    };
    for (std::size_t t = 0; t < rec.size(); ++t) {
        const double le = rec[t].loss * rec[t].eta.value();
        a.worst_stability = std::max(a.worst_stability, le);
        if (le > 1.0 + kStabilitySlack) {
            ++a.stability_violations;
            note(t, "loss * eta = " + detail::fmt(le));
        }
        if (t > 0 && rec[t].loss > rec[t - 1].loss + kMonotoneSlack) {
            ++a.monotone_violations;
            note(t, "loss increased");
        }
        if (t >= 1) {
            const double bound = stable_phase_bound(run.F0, rec[t - 1].S.value());
            a.worst_stable_phase_ratio = std::max(a.worst_stable_phase_ratio, rec[t].loss / bound);
            if (rec[t].loss > bound * (1.0 + kStablePhaseRelSlack)) {
                ++a.stable_phase_violations;
                note(t, "loss " + detail::fmt(rec[t].loss) + " above stable-phase bound " + detail::fmt(bound));
            }
        }
    }
    if (run.schedule.tau2) {
        const std::size_t s = *run.schedule.tau2;
        if (s < rec.size() && rec[s].S.value() > 1.0) {
            const GrowthConstants k = growth_constants(run.gamma, run.S0, run.F0, s, *rec[s].S);
            for (std::size_t t = s; t < rec.size(); ++t) {
                const double l = std::log(*rec[t].S);
                const Sandwich sw = growth_sandwich(k, t);
                ++a.sandwich_checked;
                if (!sw.contains(l * l * l, kSandwichSlack)) {
                    ++a.sandwich_violations;
                    note(t, "ln^3 S = " + detail::fmt(l * l * l) + " outside [" + detail::fmt(sw.lower) + ", " +
                                detail::fmt(sw.upper) + "]");
                }
                if (t > s && rec[t].loss > pointwise_loss_bound(*rec[t - 1].S) * (1.0 + kStablePhaseRelSlack)) {
                    ++a.pointwise_violations;
                    note(t, "loss above 2 ln^2 S / S");
                }
            }
        }
    }
    return a;
}

}  // namespace sepgd
