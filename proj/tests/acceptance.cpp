// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "sepgd/analysis.hpp"
#include "sepgd/data_gen.hpp"
#include "sepgd/montecarlo.hpp"
#include "sepgd/optimizers.hpp"
#include "sepgd/schedule.hpp"
#include "sepgd/verify.hpp"

using namespace sepgd;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const char* id, const char* title, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %s %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// A1-A3 and A9 share one dataset. gamma = 0.5 so that the T = 5000 run gets
// well past tau2; see README.
const GenSpec kGdSpec{80, 1500, 0.5, 7};
constexpr std::size_t kGdSteps = 5000;

const Dataset& gd_data() {
    static const Dataset data = generate_separable(kGdSpec);
    return data;
}

const GdScheduleRun& gd_run() {
    static const GdScheduleRun run = [] {
        GdOptions opts;
        opts.fail_fast = false;
        return run_gd_schedule(gd_data(), kGdSpec.margin, Weights::zeros(kGdSpec.dim), kGdSteps, opts);
    }();
    return run;
}

const GdAudit& gd_audit() {
    static const GdAudit a = audit_gd_run(gd_run());
    return a;
}

// A5/A6 share the Monte-Carlo runs.
const GenSpec kSgdSpec{10, 5000, 0.2, 1};
constexpr double kSgdEps = 1e-2;

const MonteCarloResult& sgd_runs() {
    static const MonteCarloResult mc = [] {
        const Dataset data = generate_separable(kSgdSpec);
        SgdOptions opts;
        opts.audit = true;
        std::vector<std::uint64_t> seeds;
        for (std::uint64_t s = 1; s <= 10; ++s) seeds.push_back(s);
        return montecarlo_sgd(data, kSgdSpec.margin, kSgdEps, seeds, 0, opts, 0);
    }();
    return mc;
}

// ceil(4n/(delta gamma^2) ln^2(8n/(delta eps))) in 50 significant digits
std::uint64_t block_length_oracle(std::size_t n, double gamma, double delta, double eps) {
    using big = boost::multiprecision::cpp_bin_float_50;
    const big nn(n), g(gamma), d(delta), e(eps);
    const big l = log(8 * nn / (d * e));
    return static_cast<std::uint64_t>(ceil(4 * nn / (d * g * g) * l * l));
}

}  // namespace

int main() {
    report("A1", "GD stability invariant", [] {
        const GdScheduleRun& run = gd_run();
        const GdAudit& a = gd_audit();
        const std::size_t bad = a.stability_violations + a.monotone_violations;
        return Outcome{bad == 0 && run.trace.records.size() == kGdSteps + 1,
                       fmt("d=80 n=1500 gamma=%.2f T=%zu: %zu stability + %zu monotonicity violations, "
                           "max loss*eta = %.12f, terminal loss %.3e",
                           kGdSpec.margin, kGdSteps, a.stability_violations, a.monotone_violations,
                           a.worst_stability, run.trace.records.back().loss)};
    });

    report("A2", "stable-phase bound", [] {
        const GdAudit& a = gd_audit();
        return Outcome{a.stable_phase_violations == 0,
                       fmt("%zu violations over t=1..%zu, max loss/bound = %.6f", a.stable_phase_violations,
                           kGdSteps, a.worst_stable_phase_ratio)};
    });

    report("A3", "growth sandwich and t^(1/3) fit", [] {
        const GdScheduleRun& run = gd_run();
        const GdAudit& a = gd_audit();
        if (!run.schedule.tau2) return Outcome{false, "tau2 not reached"};
        const std::size_t tau2 = *run.schedule.tau2;
        const LinearFit fit = fit_growth(run.trace.records, tau2 + 100, kGdSteps);
        return Outcome{a.sandwich_violations == 0 && a.sandwich_checked == kGdSteps + 1 - tau2 &&
                           fit.r_squared >= 0.99,
                       fmt("tau2=%zu, %zu/%zu sandwich violations, R^2 = %.6f (slope %.4f, %zu points)", tau2,
                           a.sandwich_violations, a.sandwich_checked, fit.r_squared, fit.slope, fit.points)};
    });

    report("A4", "crossing-time brackets", [] {
        std::string detail;
        bool ok = true;
        for (double gamma : {0.05, 0.1, 0.2, 0.5, 0.8}) {
            const double eta0 = initial_eta(Weights::zeros(1));
            const ScheduleState s = run_until_crossings(gamma, eta0, 1.0, 100'000'000);
            if (!s.tau1 || !s.tau2) return Outcome{false, fmt("gamma=%.2f: crossings not reached", gamma)};
            const CrossingBrackets br = crossing_time_brackets(gamma * gamma * eta0, 1.0, gamma);
            const bool in = br.tau1_contains(*s.tau1) && br.tau2_contains(*s.tau2);
            const double l = s.log_S();
            const bool ln_ok = l > std::numbers::sqrt2 && l <= 1.65;
            ok = ok && in && ln_ok;
            detail += fmt("g=%.2f tau1=%zu%s tau2=%zu%s lnS=%.4f; ", gamma, *s.tau1, br.tau1_exact ? "(=0)" : "",
                          *s.tau2, in ? "" : "(OUT)", l);
        }
        return Outcome{ok, detail};
    });

    report("A5", "SGD hitting time vs expectation bound", [] {
        const MonteCarloResult& mc = sgd_runs();
        const HittingStats& st = mc.stats;
        std::string taus;
        for (const auto& r : st.taus) taus += r.tau ? std::to_string(*r.tau) + " " : "censored ";
        return Outcome{st.censored_count() == 0 && st.mean_tau() <= st.bound_expectation,
                       fmt("d=10 n=5000 gamma=0.2 eps=1e-2, 10 seeds, %zu censored, mean tau %.1f <= bound %.4g; "
                           "tau = %s",
                           st.censored_count(), st.mean_tau(), st.bound_expectation, taus.c_str())};
    });

    report("A6", "SGD pathwise drift and one-over-n", [] {
        const MonteCarloResult& mc = sgd_runs();
        double worst_excess = -INFINITY, worst_ratio = INFINITY, worst_comp = 0.0;
        std::size_t steps = 0;
        for (const auto& run : mc.runs) {
            if (!run.drift) return Outcome{false, "audit missing"};
            worst_excess = std::max(worst_excess, run.drift->max_pathwise_excess);
            worst_ratio = std::min(worst_ratio, run.drift->min_top_loss_ratio);
            worst_comp = std::max(worst_comp, run.drift->comparator_loss / run.drift->comparator_bound);
            steps += run.drift->steps_checked;
        }
        return Outcome{worst_excess <= 1e-10 && worst_ratio >= 1.0 && worst_comp <= 1.0,
                       fmt("%zu steps audited, max pathwise excess %.3e, min max_j L_j/eps %.3f, "
                           "L(u)/(eps/4n) = %.3e",
                           steps, worst_excess, worst_ratio, worst_comp)};
    });

    report("A7", "block adaptive SGD", [] {
        const Dataset data = generate_separable({10, 200, 0.2, 3});
        const BlockPlan plan = make_block_plan(200, 0.2, 0.4, 0.2, 0.1);
        bool lengths_ok = true;
        std::string lengths;
        for (const auto& b : plan.blocks) {
            const std::uint64_t oracle = block_length_oracle(200, 0.2, 0.2, b.eps);
            lengths_ok = lengths_ok && b.length == oracle;
            lengths += fmt("N%zu=%llu ", b.k, static_cast<unsigned long long>(b.length));
        }
        std::vector<BlockRun> runs(20);
        parallel_for(runs.size(), 0, [&](std::size_t k) { runs[k] = run_block_sgd(data, plan, k + 1); });
        std::size_t reached = 0;
        double max_ratio = 0.0;
        for (const auto& r : runs) {
            reached += r.reached_target ? 1 : 0;
            max_ratio = std::max(max_ratio, r.max_step_ratio);
        }
        const double frac = static_cast<double>(reached) / static_cast<double>(runs.size());
        return Outcome{lengths_ok && frac >= 0.65 && max_ratio <= 1.0,
                       fmt("%s(formula %s), k_eps=%zu, %zu/20 seeds reach loss <= 0.1 by s_{k_eps+1} (%.2f >= 0.65), "
                           "max eta*eps_k = %.3f",
                           lengths.c_str(), lengths_ok ? "match" : "MISMATCH", plan.k_eps, reached, frac, max_ratio)};
    });

    report("A8", "loss-core oracles", [] {
        std::mt19937_64 rng(8);
        std::normal_distribution<double> normal;
        const Dataset data = generate_separable({10, 300, 0.2, 4});
        double worst_fd = 0.0, worst_self = 0.0;
        for (int k = 0; k < 100; ++k) {
            Weights w = Weights::zeros(10);
            for (std::size_t j = 0; j < 10; ++j) w[j] = normal(rng);
            worst_fd = std::max(worst_fd, finite_difference_error(w, data));
            const double l = full_loss(w, data);
            worst_self = std::max(worst_self, detail::norm(full_gradient(w, data)) / std::min(1.0, l));
        }
        double worst_hess = -INFINITY, worst_eig_err = 0.0;
        for (int k = 0; k < 20; ++k) {
            const std::size_t d = 1 + static_cast<std::size_t>(k % 5);
            const Dataset small = generate_separable({d, 50, 0.15, static_cast<std::uint64_t>(k)});
            Weights w = Weights::zeros(d);
            for (std::size_t j = 0; j < d; ++j) w[j] = 2.0 * normal(rng);
            Eigen::MatrixXd h = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
            for (std::size_t i = 0; i < small.size(); ++i) {
                Eigen::VectorXd x(static_cast<Eigen::Index>(d));
                for (std::size_t j = 0; j < d; ++j) x[static_cast<Eigen::Index>(j)] = small.row(i)[j];
                const double s = sigmoid(sample_margin(w, small, i));
                h += s * (1.0 - s) * x * x.transpose();
            }
            h /= static_cast<double>(small.size());
            const double oracle = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h).eigenvalues().maxCoeff();
            const double lam = hessian_max_eigenvalue(w, small, 1e-12);
            worst_eig_err = std::max(worst_eig_err, std::abs(lam - oracle));
            worst_hess = std::max(worst_hess, oracle - std::min(0.25, full_loss(w, small)));
        }
        return Outcome{worst_fd <= 1e-6 && worst_self <= 1.0 + 1e-12 && worst_hess <= 1e-8 && worst_eig_err <= 1e-9,
                       fmt("FD rel err %.2e <= 1e-6, max |grad|/min{1,L} = %.6f, max lambda - min{1/4,L} = %.3e, "
                           "power vs dense eigensolver %.1e",
                           worst_fd, worst_self, worst_hess, worst_eig_err)};
    });

    report("A9", "schedule vs constant-step GD at T=2000", [] {
        const Dataset& data = gd_data();
        const double sched = gd_run().trace.records[2000].loss;
        const double c1 = run_gd_constant(data, 1.0, Weights::zeros(80), 2000).records.back().loss;
        const double c2 = run_gd_constant(data, 2.0, Weights::zeros(80), 2000).records.back().loss;
        return Outcome{sched <= c1 && sched <= c2,
                       fmt("schedule %.3e, eta=1 %.3e, eta=2 %.3e", sched, c1, c2)};
    });

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
