#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/random/uniform_int_distribution.hpp>

#include "sepgd/data_gen.hpp"
#include "sepgd/dataset.hpp"
#include "sepgd/loss.hpp"
#include "sepgd/schedule.hpp"

namespace sepgd {

/// One row of a run trace. `eta` and `grad_norm` describe the update taken
/// from w_t; they are empty on a terminal row where no update follows.
struct TraceRecord {
    std::size_t t = 0;
    double loss = 0.0;
    std::optional<double> eta;
    std::optional<double> S;
    std::optional<double> grad_norm;
    double w_norm = 0.0;

    friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct RunTrace {
    std::vector<TraceRecord> records;
    Weights final_weights;
    std::optional<std::uint64_t> seed;
};

/// A guaranteed inequality that failed during a run.
struct Violation {
    std::size_t t = 0;
    std::string what;
};

// --------------------------------------------------------------------------
// Deterministic gradient descent

inline constexpr double kStabilitySlack = 1e-10;
inline constexpr double kMonotoneSlack = 1e-12;

struct GdOptions {
    /// Throw TheoremViolation at the first failed check instead of collecting.
    bool fail_fast = true;
};

struct GdScheduleRun {
    RunTrace trace;
    ScheduleState schedule;  ///< final schedule state (carries tau1, tau2)
    double F0 = 0.0;
    double S0 = 0.0;
    double gamma = 0.0;
    std::vector<Violation> violations;
};

namespace detail {

inline void require_margin(const Dataset& data, double gamma, const char* what) {
    if (!(gamma > 0.0)) throw InvalidInput(std::string(what) + ": gamma must be positive");
    if (const auto& cert = data.certificate()) {
        const double m = verify_margin(data, *cert);
        if (m < gamma)
            throw InvalidInput(std::string(what) + ": certified direction only achieves margin " +
                               std::to_string(m) + " < gamma = " + std::to_string(gamma));
    }
}

inline void report(std::vector<Violation>& sink, bool fail_fast, std::size_t t, std::string what) {
    if (fail_fast) throw TheoremViolation("t = " + std::to_string(t) + ": " + what);
    sink.push_back({t, std::move(what)});
}

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace detail

/// GD with the increasing step-size schedule, recording w_0 .. w_T.
///
/// At every t checks loss(w_t) * eta_t <= 1 + 1e-10 and
/// loss(w_{t+1}) <= loss(w_t) + 1e-12.
inline GdScheduleRun run_gd_schedule(const Dataset& data, double gamma, const Weights& w0,
                                     std::size_t T, const GdOptions& opts = {}) {
    if (T < 1) throw InvalidInput("run_gd_schedule: T must be >= 1");
    data.require_dim(w0.size(), "run_gd_schedule");
    data.require_normalized();
    detail::require_margin(data, gamma, "run_gd_schedule");
    if (!w0.finite()) throw InvalidInput("run_gd_schedule: w0 has non-finite entries");

    GdScheduleRun run;
    run.gamma = gamma;
    run.F0 = initial_F(w0, data);
    ScheduleState state = start_schedule(gamma, initial_eta(w0), run.F0);
    run.S0 = state.S;

    Weights w = w0;
    run.trace.records.reserve(T + 1);
    double prev_loss = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0;; ++t) {
        const LossAndGradient lg = loss_and_gradient(w, data);
        run.trace.records.push_back(
            {t, lg.loss, state.eta, state.S, detail::norm(lg.gradient), w.norm()});

        if (lg.loss * state.eta > 1.0 + kStabilitySlack)
            detail::report(run.violations, opts.fail_fast, t,
                           "loss * eta = " + detail::fmt(lg.loss * state.eta) + " > 1 (loss = " +
                               detail::fmt(lg.loss) + ", eta = " + detail::fmt(state.eta) + ")");
        if (lg.loss > prev_loss + kMonotoneSlack)
            detail::report(run.violations, opts.fail_fast, t,
                           "loss increased from " + detail::fmt(prev_loss) + " to " + detail::fmt(lg.loss));
        prev_loss = lg.loss;

        if (t == T) break;
        detail::axpy(-state.eta, lg.gradient, w.values);
        state = advance(state);
    }
    run.schedule = state;
    run.trace.final_weights = std::move(w);
    return run;
}

/// Plain GD with a fixed step. Aborts if the loss exceeds 1e12 or turns non-finite.
inline RunTrace run_gd_constant(const Dataset& data, double eta, const Weights& w0, std::size_t T) {
    if (T < 1) throw InvalidInput("run_gd_constant: T must be >= 1");
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw InvalidInput("run_gd_constant: eta must be >= 0");
    data.require_dim(w0.size(), "run_gd_constant");

    RunTrace trace;
    trace.records.reserve(T + 1);
    Weights w = w0;
    for (std::size_t t = 0;; ++t) {
        const LossAndGradient lg = loss_and_gradient(w, data);
        if (!std::isfinite(lg.loss) || lg.loss > 1e12)
            throw DivergenceError(t, "run_gd_constant: loss " + detail::fmt(lg.loss) +
                                         " diverged at t = " + std::to_string(t));
        trace.records.push_back({t, lg.loss, eta, std::nullopt, detail::norm(lg.gradient), w.norm()});
        if (t == T) break;
        detail::axpy(-eta, lg.gradient, w.values);
    }
    trace.final_weights = std::move(w);
    return trace;
}

// --------------------------------------------------------------------------
// Adaptive SGD

/// Uniform index stream on [0, n): std::mt19937_64 with
/// boost::random::uniform_int_distribution (platform independent).
class IndexSampler {
public:
    IndexSampler(std::size_t n, std::uint64_t seed) : rng_(seed), dist_(0, n - 1) {
        if (n == 0) throw InvalidInput("IndexSampler: n must be positive");
    }
    std::size_t operator()() { return dist_(rng_); }

private:
    std::mt19937_64 rng_;
    boost::random::uniform_int_distribution<std::size_t> dist_;
};

/// E[tau] bound for Adaptive SGD: (2n / gamma^2) ln^2(4n / eps).
inline double sgd_expectation_bound(std::size_t n, double gamma, double epsilon) {
    const double l = std::log(4.0 * static_cast<double>(n) / epsilon);
    return 2.0 * static_cast<double>(n) / (gamma * gamma) * l * l;
}

/// eta = min{1/eps, 1/L_i}; a vanishing sample loss takes the 1/eps cap.
inline double adaptive_step(double sample_loss_value, double epsilon) {
    if (sample_loss_value <= 0.0) return 1.0 / epsilon;
    return std::min(1.0 / epsilon, 1.0 / sample_loss_value);
}

inline constexpr double kPathwiseSlack = 1e-10;

/// Per-run audit of the distance-to-comparator process D_t = ||w_t - u||^2.
struct DriftReport {
    Vector comparator;            ///< u = (1/gamma) ln(4n/eps) w*
    double comparator_loss = 0.0; ///< L(u)
    double comparator_bound = 0.0;///< eps / (4n)
    double D0 = 0.0;
    std::size_t steps_checked = 0;
    /// max over steps of (D_{t+1} - D_t) - (-eta L_i(w_t) + 2 eta L_i(u)); <= slack when the inequality holds
    double max_pathwise_excess = -std::numeric_limits<double>::infinity();
    /// min over pre-hitting steps of max_j L_j(w_t) / eps; >= 1 required
    double min_top_loss_ratio = std::numeric_limits<double>::infinity();
    /// D_{t+1} - D_t for every pre-hitting step t
    std::vector<double> increments;

    double mean_increment() const {
        if (increments.empty()) return 0.0;
        double s = 0.0;
        for (double v : increments) s += v;
        return s / static_cast<double>(increments.size());
    }
};

struct SgdOptions {
    /// Run the pathwise drift / one-over-n audit; needs a certificate.
    bool audit = false;
    /// Keep every k-th trace row (the terminal row is always kept).
    std::size_t record_every = 1;
};

struct SgdRun {
    RunTrace trace;
    std::optional<std::size_t> tau;
    bool censored = false;
    std::size_t steps = 0;
    std::optional<DriftReport> drift;
};

namespace detail {

/// ||a + delta - u||^2 - ||a - u||^2 without forming both squares.
inline double distance_increment(std::span<const double> w, std::span<const double> delta,
                                 std::span<const double> u) {
    double s = 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) s += delta[k] * (delta[k] + 2.0 * (w[k] - u[k]));
    return s;
}

inline double distance_sq(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return s;
}

}  // namespace detail

/// Adaptive SGD from w0 = 0 with eta_t = min{1/eps, 1/L_{i_t}(w_t)}.
///
/// The full loss is evaluated at every iterate so that `tau` is the exact
/// first time L(w_t) <= eps. Reaching `cap` without a hit is reported as
/// censored, not as an error.
inline SgdRun run_adaptive_sgd(const Dataset& data, double epsilon, std::uint64_t seed, std::size_t cap,
                               const SgdOptions& opts = {}) {
    const std::size_t n = data.size();
    const std::size_t d = data.dim();
    if (cap < 1) throw InvalidInput("run_adaptive_sgd: cap must be >= 1");
    if (opts.record_every < 1) throw InvalidInput("run_adaptive_sgd: record_every must be >= 1");
    Weights w = Weights::zeros(d);
    if (!(epsilon > 0.0) || !(epsilon < full_loss(w, data)))
        throw InvalidInput("run_adaptive_sgd: epsilon must lie in (0, L(w0)) = (0, ln 2)");

    SgdRun run;
    run.trace.seed = seed;
    IndexSampler sample(n, seed);

    std::optional<DriftReport> audit;
    if (opts.audit) {
        if (!data.certificate()) throw InvalidInput("run_adaptive_sgd: audit requires a margin certificate");
        const auto& cert = *data.certificate();
        DriftReport rep;
        const double scale = std::log(4.0 * static_cast<double>(n) / epsilon) / cert.margin;
        rep.comparator.resize(d);
        for (std::size_t k = 0; k < d; ++k) rep.comparator[k] = scale * cert.direction[k];
        rep.comparator_loss = full_loss(Weights(rep.comparator), data);
        rep.comparator_bound = epsilon / (4.0 * static_cast<double>(n));
        if (rep.comparator_loss > rep.comparator_bound)
            throw TheoremViolation("comparator loss " + detail::fmt(rep.comparator_loss) +
                                   " exceeds eps/(4n) = " + detail::fmt(rep.comparator_bound));
        rep.D0 = detail::distance_sq(w.values, rep.comparator);
        audit = std::move(rep);
    }
    const Weights u = audit ? Weights(audit->comparator) : Weights();

    Vector delta(d);
    for (std::size_t t = 0;; ++t) {
        // full loss, tracking the largest sample loss for the one-over-n scan
        double sum = 0.0;
        double top = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double lj = softplus(-sample_margin(w, data, j));
            sum += lj;
            top = std::max(top, lj);
        }
        const double loss = sum / static_cast<double>(n);
        const bool keep = t % opts.record_every == 0;

        if (loss <= epsilon) {
            run.tau = t;
            run.steps = t;
            run.trace.records.push_back({t, loss, std::nullopt, std::nullopt, std::nullopt, w.norm()});
            break;
        }
        if (t == cap) {
            run.censored = true;
            run.steps = t;
            run.trace.records.push_back({t, loss, std::nullopt, std::nullopt, std::nullopt, w.norm()});
            break;
        }
        if (audit) {
            audit->min_top_loss_ratio = std::min(audit->min_top_loss_ratio, top / epsilon);
            if (top < epsilon)
                throw TheoremViolation("t = " + std::to_string(t) + ": L(w_t) = " + detail::fmt(loss) +
                                       " > eps but every sample loss is below eps");
        }

        const std::size_t i = sample();
        const double m = sample_margin(w, data, i);
        const double li = softplus(-m);
        const double eta = adaptive_step(li, epsilon);
        const double coef = -data.label(i) * sigmoid(-m);  // grad = coef * x_i
        const double gnorm = std::abs(coef) * detail::norm(data.row(i));
        for (std::size_t k = 0; k < d; ++k) delta[k] = -eta * coef * data.row(i)[k];

        if (audit) {
            const double inc = detail::distance_increment(w.values, delta, u.values);
            const double rhs = -eta * li + 2.0 * eta * sample_loss(u, data, i);
            audit->max_pathwise_excess = std::max(audit->max_pathwise_excess, inc - rhs);
            if (inc > rhs + kPathwiseSlack)
                throw TheoremViolation("t = " + std::to_string(t) + ": pathwise drift inequality fails (" +
                                       detail::fmt(inc) + " > " + detail::fmt(rhs) + ")");
            audit->increments.push_back(inc);
            ++audit->steps_checked;
        }
        if (keep) run.trace.records.push_back({t, loss, eta, std::nullopt, gnorm, w.norm()});
        for (std::size_t k = 0; k < d; ++k) w[k] += delta[k];
    }
    run.drift = std::move(audit);
    run.trace.final_weights = std::move(w);
    return run;
}

// --------------------------------------------------------------------------
// Block Adaptive SGD

struct Block {
    std::size_t k = 0;
    double eps = 0.0;          ///< eps_k = eps0 / 2^k
    std::uint64_t length = 0;  ///< N_k
    std::uint64_t start = 0;   ///< s_k

    friend bool operator==(const Block&, const Block&) = default;
};

struct BlockPlan {
    std::size_t n = 0;
    double gamma = 0.0;
    double eps0 = 0.0;
    double delta = 0.0;
    double target_eps = 0.0;
    std::size_t k_eps = 0;
    std::vector<Block> blocks;  ///< blocks 0..k_eps

    /// s_{k_eps + 1}: iterations up to the end of the activated block.
    std::uint64_t total() const { return blocks.back().start + blocks.back().length; }
    const Block& activated() const { return blocks.back(); }
};

/// N_k = ceil( 4n / (delta gamma^2) * ln^2( 8n / (delta eps_k) ) ).
inline std::uint64_t block_length(std::size_t n, double gamma, double delta, double eps_k) {
    const double nn = static_cast<double>(n);
    const double l = std::log(8.0 * nn / (delta * eps_k));
    return static_cast<std::uint64_t>(std::ceil(4.0 * nn / (delta * gamma * gamma) * l * l));
}

inline BlockPlan make_block_plan(std::size_t n, double gamma, double eps0, double delta, double target_eps) {
    if (n < 1) throw InvalidInput("make_block_plan: n must be >= 1");
    if (!(gamma > 0.0)) throw InvalidInput("make_block_plan: gamma must be positive");
    if (!(eps0 > 0.0 && eps0 < 1.0)) throw InvalidInput("make_block_plan: eps0 must lie in (0, 1)");
    if (!(target_eps > 0.0 && target_eps <= eps0))
        throw InvalidInput("make_block_plan: target_eps must lie in (0, eps0]");
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("make_block_plan: delta must lie in (0, 1)");

    BlockPlan plan{n, gamma, eps0, delta, target_eps, 0, {}};
    std::uint64_t start = 0;
    for (std::size_t k = 0;; ++k) {
        const double eps_k = std::ldexp(eps0, -static_cast<int>(k));
        const std::uint64_t len = block_length(n, gamma, delta, eps_k);
        plan.blocks.push_back({k, eps_k, len, start});
        start += len;
        if (eps_k <= target_eps) {
            plan.k_eps = k;
            break;
        }
    }
    return plan;
}

/// How the full loss is monitored during a block run.
enum class LossMonitor {
    /// Evaluate L(w_t) at every iterate.
    every_step,
    /// Skip evaluations that provably cannot reach the threshold. ln L is
    /// Lipschitz with constant max_i ||x_i|| (<= 1 under normalized
    /// features), so the log-loss moves at most that much per unit of path
    /// length travelled by w.
    certified_skip,
};

struct BlockOptions {
    LossMonitor monitor = LossMonitor::certified_skip;
};

struct BlockRun {
    RunTrace trace;               ///< rows at every evaluated iterate
    bool reached_target = false;  ///< min_{t <= s_{k_eps+1}} L(w_t) <= target (exact in both modes)
    std::optional<std::uint64_t> first_hit;
    double min_loss = std::numeric_limits<double>::infinity();  ///< min over evaluated iterates
    std::optional<std::uint64_t> post_activation_tau;  ///< inf{t >= s_{k_eps}: L(w_t) <= eps_bar}
    bool censored = false;
    std::uint64_t steps = 0;
    std::uint64_t evaluations = 0;
    double max_step_ratio = 0.0;  ///< max over t of eta_t * eps_k (<= 1)
};

/// Squared norm of the block comparator u = (1/gamma) ln(8n/(delta eps_bar)) w*.
inline double block_comparator_sq_norm(const BlockPlan& plan) {
    const double l = std::log(8.0 * static_cast<double>(plan.n) / (plan.delta * plan.activated().eps));
    return l * l / (plan.gamma * plan.gamma);
}

/// Upper bound 2n||u||^2 + delta N / 2 on E[(tau - s)_+ ^ N].
inline double block_expected_steps_bound(const BlockPlan& plan) {
    return 2.0 * static_cast<double>(plan.n) * block_comparator_sq_norm(plan) +
           plan.delta * static_cast<double>(plan.activated().length) / 2.0;
}

/// Block Adaptive SGD from w0 = 0. Runs until the post-activation hitting time
/// or the end of block k_eps, whichever comes first; nothing reported depends
/// on iterates after the hit.
inline BlockRun run_block_sgd(const Dataset& data, const BlockPlan& plan, std::uint64_t seed,
                              const BlockOptions& opts = {}) {
    if (plan.n != data.size())
        throw InvalidInput("run_block_sgd: plan built for n = " + std::to_string(plan.n) + " but data has n = " +
                           std::to_string(data.size()));
    data.require_normalized();
    const std::size_t n = data.size();
    const std::size_t d = data.dim();
    const std::uint64_t total = plan.total();
    const std::uint64_t s_act = plan.activated().start;
    const double eps_bar = plan.activated().eps;
    const double target = plan.target_eps;

    BlockRun run;
    run.trace.seed = seed;
    IndexSampler sample(n, seed);
    Weights w = Weights::zeros(d);

    // certified-skip bookkeeping: log of the last evaluated loss and the path
    // length travelled since that evaluation
    double ref_log_loss = 0.0;
    double travelled = 0.0;
    const double lipschitz = data.max_row_norm();  // of ln L
    bool have_ref = false;

    std::size_t block = 0;
    for (std::uint64_t t = 0;; ++t) {
        while (block + 1 < plan.blocks.size() && t >= plan.blocks[block + 1].start) ++block;
        const bool activated = t >= s_act;
        const bool need_hit = !run.reached_target;
        const bool need_tau = activated;

        std::optional<double> loss;
        if (need_hit || need_tau) {
            const double thr = std::max(need_hit ? target : 0.0, need_tau ? eps_bar : 0.0);
            bool evaluate = opts.monitor == LossMonitor::every_step || !have_ref || t == s_act;
            if (!evaluate) evaluate = ref_log_loss - travelled <= std::log(thr) + 1e-9;
            if (evaluate) {
                loss = full_loss(w, data);
                ++run.evaluations;
                ref_log_loss = std::log(*loss);
                travelled = 0.0;
                have_ref = true;
                run.min_loss = std::min(run.min_loss, *loss);
                if (*loss <= target && !run.reached_target) {
                    run.reached_target = true;
                    run.first_hit = t;
                }
                if (activated && *loss <= eps_bar) {
                    run.post_activation_tau = t;
                    run.steps = t;
                    run.trace.records.push_back({t, *loss, std::nullopt, std::nullopt, std::nullopt, w.norm()});
                    break;
                }
            }
        }
        if (t == total) {
            run.censored = true;
            run.steps = t;
            if (!loss) loss = full_loss(w, data);
            run.min_loss = std::min(run.min_loss, *loss);
            run.trace.records.push_back({t, *loss, std::nullopt, std::nullopt, std::nullopt, w.norm()});
            break;
        }

        const double eps_k = plan.blocks[block].eps;
        const std::size_t i = sample();
        const double m = sample_margin(w, data, i);
        const double eta = adaptive_step(softplus(-m), eps_k);
        run.max_step_ratio = std::max(run.max_step_ratio, eta * eps_k);
        if (eta * eps_k > 1.0 + 1e-15)
            throw TheoremViolation("t = " + std::to_string(t) + ": step " + detail::fmt(eta) +
                                   " exceeds block cap 1/eps_k = " + detail::fmt(1.0 / eps_k));
        const double coef = -data.label(i) * sigmoid(-m);
        const double xnorm = detail::norm(data.row(i));
        if (loss)
            run.trace.records.push_back({t, *loss, eta, std::nullopt, std::abs(coef) * xnorm, w.norm()});
        detail::axpy(-eta * coef, data.row(i), w.values);
        travelled += lipschitz * eta * std::abs(coef) * xnorm;
    }
    run.trace.final_weights = std::move(w);
    return run;
}

}  // namespace sepgd
