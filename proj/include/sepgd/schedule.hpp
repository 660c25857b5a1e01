#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "sepgd/dataset.hpp"
#include "sepgd/loss.hpp"

namespace sepgd {

/// Which argument of max{2F(w0), ln^2(S)} produced the step size.
enum class Branch : int {
    exp_loss = 0,     ///< 2F(w0) is the larger term (geometric regime)
    log_squared = 1,  ///< ln^2(S) is the larger term
};

/// Running state of the increasing GD step-size schedule.
///
/// `S` is gamma^2 times the sum of every step size emitted so far (including
/// the current `eta`). `tau1` / `tau2` record the first iteration at which
/// ln S crossed -sqrt(2 F0) and +sqrt(2 F0) respectively.
struct ScheduleState {
    std::size_t t = 0;
    double eta = 0.0;
    double S = 0.0;
    double F0 = 1.0;
    double gamma = 0.0;
    Branch branch = Branch::exp_loss;
    std::optional<std::size_t> tau1;
    std::optional<std::size_t> tau2;
    /// Plain running sum of eta, used only to cross-check S.
    double eta_sum = 0.0;

    double log_S() const { return std::log(S); }
    double threshold() const { return std::sqrt(2.0 * F0); }
};

/// Step sizes whose S drifts from gamma^2 * sum(eta) by more than this fail.
inline constexpr double kScheduleDriftTolerance = 1e-9;
/// How often `advance` cross-checks S against the running sum.
inline constexpr std::size_t kScheduleCheckPeriod = 1000;

/// eta_0 = 1 / (ln 2 + ||w0||).
inline double initial_eta(const Weights& w0) { return 1.0 / (std::numbers::ln2 + w0.norm()); }

/// F(w0): mean exponential loss at the initialization; F(0) = 1.
inline double initial_F(const Weights& w0, const Dataset& data) { return exp_loss_mean(w0, data); }

inline Branch active_branch(double S, double F0) {
    const double l = std::log(S);
    return l * l > 2.0 * F0 ? Branch::log_squared : Branch::exp_loss;
}

namespace detail {

inline void mark_crossings(ScheduleState& s) {
    const double l = s.log_S();
    const double thr = s.threshold();
    if (!s.tau1 && l > -thr) s.tau1 = s.t;
    if (!s.tau2 && l > thr) s.tau2 = s.t;
}

}  // namespace detail

/// State at t = 0 for margin `gamma`, first step `eta0` and F(w0) = `F0`.
inline ScheduleState start_schedule(double gamma, double eta0, double F0) {
    if (!(gamma > 0.0) || !(eta0 > 0.0) || !(F0 > 0.0))
        throw InvalidInput("start_schedule: gamma, eta0 and F0 must be positive");
    ScheduleState s;
    s.t = 0;
    s.eta = eta0;
    s.eta_sum = eta0;
    s.S = gamma * gamma * eta0;
    s.F0 = F0;
    s.gamma = gamma;
    s.branch = active_branch(s.S, F0);
    detail::mark_crossings(s);
    return s;
}

struct EtaStep {
    double eta = 0.0;
    Branch branch = Branch::exp_loss;
};

/// eta_{t+1} = S_t / (2 max{2F0, ln^2 S_t}).
inline EtaStep next_eta(const ScheduleState& state) {
    if (!std::isfinite(state.S) || !(state.S > 0.0))
        throw NumericError("next_eta: S = " + std::to_string(state.S) + " is not positive and finite");
    const double l = std::log(state.S);
    const double two_f = 2.0 * state.F0;
    const double l2 = l * l;
    EtaStep step;
    step.branch = l2 > two_f ? Branch::log_squared : Branch::exp_loss;
    step.eta = state.S / (2.0 * std::max(two_f, l2));
    return step;
}

/// One schedule step: S_{t+1} = S_t + gamma^2 eta_{t+1}, which equals
/// S_t (1 + gamma^2 / (2 max{2F0, ln^2 S_t})).
inline ScheduleState advance(const ScheduleState& state) {
    const EtaStep step = next_eta(state);
    ScheduleState next = state;
    next.t = state.t + 1;
    next.eta = step.eta;
    next.branch = step.branch;
    next.S = state.S + state.gamma * state.gamma * step.eta;
    next.eta_sum = state.eta_sum + step.eta;
    if (next.t % kScheduleCheckPeriod == 0) {
        const double summed = state.gamma * state.gamma * next.eta_sum;
        if (std::abs(next.S - summed) > kScheduleDriftTolerance * summed)
            throw NumericError("schedule: S = " + std::to_string(next.S) + " drifted from gamma^2*sum(eta) = " +
                               std::to_string(summed) + " at t = " + std::to_string(next.t));
    }
    detail::mark_crossings(next);
    return next;
}

/// Simulates the schedule for `steps` steps; element t is the state at t.
inline std::vector<ScheduleState> simulate_schedule(double gamma, double eta0, double F0, std::size_t steps) {
    std::vector<ScheduleState> out;
    out.reserve(steps + 1);
    out.push_back(start_schedule(gamma, eta0, F0));
    for (std::size_t k = 0; k < steps; ++k) out.push_back(advance(out.back()));
    return out;
}

/// Runs the schedule until both crossing times are known (or `max_steps`).
inline ScheduleState run_until_crossings(double gamma, double eta0, double F0, std::size_t max_steps) {
    ScheduleState s = start_schedule(gamma, eta0, F0);
    while (!s.tau2 && s.t < max_steps) s = advance(s);
    return s;
}

/// Stable-phase loss bound (2 F_s + ln^2 X) / X where X = gamma^2 * sum of
/// the step sizes since the anchor.
inline double stable_phase_bound(double F_s, double scaled_sum) {
    if (!(scaled_sum > 0.0)) throw InvalidInput("stable_phase_bound: scaled_sum must be positive");
    const double l = std::log(scaled_sum);
    return (2.0 * F_s + l * l) / scaled_sum;
}

/// 2 ln^2(S) / S, the per-iteration loss bound once ln^2 S dominates.
inline double pointwise_loss_bound(double S_prev) {
    const double l = std::log(S_prev);
    return 2.0 * l * l / S_prev;
}

/// Constants of the ln^3(S_t) growth sandwich anchored at `anchor_s`, plus the
/// geometric-phase factors a and b.
struct GrowthConstants {
    double C1 = 0.0;
    double C2 = 0.0;
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    std::size_t anchor_s = 0;
    double lnS_anchor = 0.0;
    double gamma = 0.0;
};

inline GrowthConstants growth_constants(double gamma, double S0, double F0, std::size_t anchor_s,
                                        double S_anchor) {
    if (!(S_anchor > 1.0))
        throw InvalidInput("growth_constants: anchor value S = " + std::to_string(S_anchor) +
                           " must exceed 1");
    const double g2 = gamma * gamma;
    const double l = std::log(S_anchor);
    const double l0 = std::log(S0);
    GrowthConstants k;
    k.gamma = gamma;
    k.anchor_s = anchor_s;
    k.lnS_anchor = l;
    k.C1 = 1.0 + g2 / (2.0 * l * l);
    k.C2 = 1.5 * g2 + 3.0 * g2 * g2 / (4.0 * l * l * l) + g2 * g2 * g2 / (8.0 * std::pow(l, 6));
    k.a = l0 == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 + g2 / (2.0 * l0 * l0);
    k.b = 1.0 + g2 / (4.0 * F0);
    k.c = std::cbrt(0.75 * g2);
    return k;
}

struct Sandwich {
    double lower = 0.0;
    double upper = 0.0;
    bool contains(double value, double slack) const {
        return value >= lower - slack && value <= upper + slack;
    }
};

/// Bounds on ln^3(S_t) for t >= anchor:
///   ln^3 S_s + 3 gamma^2 / (2 C1) (t - s)  <=  ln^3 S_t  <=  ln^3 S_s + C2 (t - s).
inline Sandwich growth_sandwich(const GrowthConstants& k, std::size_t t) {
    if (t < k.anchor_s)
        throw InvalidInput("growth_sandwich: t = " + std::to_string(t) + " precedes anchor " +
                           std::to_string(k.anchor_s));
    const double base = k.lnS_anchor * k.lnS_anchor * k.lnS_anchor;
    const double steps = static_cast<double>(t - k.anchor_s);
    return {base + 1.5 * k.gamma * k.gamma / k.C1 * steps, base + k.C2 * steps};
}

/// Analytic brackets for the two crossing times.
///
/// tau1 in (tau1_lo, tau1_hi] unless `tau1_exact`, in which case tau1 = 0.
/// tau2 in [tau2_lo, tau2_hi) unless `tau2_exact`, in which case tau2 = 0.
/// ln S_{tau2} in (lnS_tau2_lo, lnS_tau2_hi].
struct CrossingBrackets {
    double tau1_lo = 0.0;
    double tau1_hi = 0.0;
    double tau2_lo = 0.0;
    double tau2_hi = 0.0;
    bool tau1_exact = false;
    bool tau2_exact = false;
    double lnS_tau2_lo = 0.0;
    double lnS_tau2_hi = 0.0;

    bool tau1_contains(std::size_t tau1) const {
        const double t = static_cast<double>(tau1);
        return tau1_exact ? tau1 == 0 : (t > tau1_lo && t <= tau1_hi);
    }
    bool tau2_contains(std::size_t tau2) const {
        const double t = static_cast<double>(tau2);
        return tau2_exact ? tau2 == 0 : (t >= tau2_lo && t < tau2_hi);
    }
};

inline CrossingBrackets crossing_time_brackets(double S0, double F0, double gamma) {
    if (!(S0 > 0.0) || !(F0 > 0.0) || !(gamma > 0.0))
        throw InvalidInput("crossing_time_brackets: S0, F0 and gamma must be positive");
    const double thr = std::sqrt(2.0 * F0);
    const double l0 = std::log(S0);
    const double ln_b = std::log1p(gamma * gamma / (4.0 * F0));
    CrossingBrackets br;
    br.lnS_tau2_lo = thr;
    br.lnS_tau2_hi = thr + ln_b;

    if (l0 > thr) {
        br.tau1_exact = br.tau2_exact = true;
        br.lnS_tau2_lo = br.lnS_tau2_hi = l0;
        return br;
    }
    if (l0 > -thr) {
        // Schedule starts in the geometric regime: tau1 = 0 and ln S_{tau1} = ln S0.
        br.tau1_exact = true;
        br.tau2_lo = (thr - l0) / ln_b;
        br.tau2_hi = 1.0 + (thr - l0) / ln_b;
        return br;
    }
    const double ln_a = std::log1p(gamma * gamma / (2.0 * l0 * l0));
    br.tau1_lo = (-thr - l0) / ln_b;
    br.tau1_hi = 1.0 + (-thr - l0) / ln_a;
    // ln S_{tau1} lies in (-thr, -thr + ln b]
    br.tau2_lo = br.tau1_lo + (2.0 * thr - ln_b) / ln_b;
    br.tau2_hi = br.tau1_hi + 1.0 + 2.0 * thr / ln_b;
    return br;
}

/// Rate exponent c = (3 gamma^2 / 4)^{1/3}.
inline double rate_exponent(double gamma) { return std::cbrt(0.75 * gamma * gamma); }

/// C t^{2/3} exp(-c t^{1/3}).
inline double loss_rate_bound(std::size_t t, double gamma, double C) {
    if (t < 1) throw InvalidInput("loss_rate_bound: t must be >= 1");
    const double tt = static_cast<double>(t);
    return C * std::pow(tt, 2.0 / 3.0) * std::exp(-rate_exponent(gamma) * std::cbrt(tt));
}

/// The constant C that makes `loss_rate_bound(t, gamma, C)` equal `loss` at t.
inline double calibrate_rate_constant(std::size_t t, double loss, double gamma) {
    return loss / loss_rate_bound(t, gamma, 1.0);
}

}  // namespace sepgd
