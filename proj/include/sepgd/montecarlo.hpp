#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "sepgd/optimizers.hpp"

namespace sepgd {

/// Outcome of one seeded Adaptive SGD run.
struct HittingRecord {
    std::uint64_t seed = 0;
    std::optional<std::size_t> tau;  ///< empty when censored
    std::size_t cap = 0;

    bool censored() const { return !tau.has_value(); }
    friend bool operator==(const HittingRecord&, const HittingRecord&) = default;
};

/// Hitting times across seeds together with the expectation bound
/// (2n / gamma^2) ln^2(4n / eps) they are checked against.
struct HittingStats {
    std::vector<HittingRecord> taus;
    double epsilon = 0.0;
    double bound_expectation = 0.0;
    std::size_t n = 0;
    double gamma = 0.0;

    /// Commutative merge; records stay sorted by seed.
    void merge(const HittingStats& other) {
        if (taus.empty() && n == 0) {
            epsilon = other.epsilon;
            bound_expectation = other.bound_expectation;
            n = other.n;
            gamma = other.gamma;
        } else if (other.n != 0 && (other.n != n || other.epsilon != epsilon || other.gamma != gamma)) {
            throw InvalidInput("HittingStats::merge: incompatible configurations");
        }
        taus.insert(taus.end(), other.taus.begin(), other.taus.end());
        std::sort(taus.begin(), taus.end(),
                  [](const HittingRecord& a, const HittingRecord& b) { return a.seed < b.seed; });
    }

    std::size_t censored_count() const {
        return static_cast<std::size_t>(
            std::count_if(taus.begin(), taus.end(), [](const HittingRecord& r) { return r.censored(); }));
    }

    /// Sample mean of tau, censored runs counted at their cap (a lower bound
    /// on the true mean whenever anything is censored).
    double mean_tau() const {
        if (taus.empty()) return 0.0;
        double s = 0.0;
        for (const auto& r : taus) s += static_cast<double>(r.tau ? *r.tau : r.cap);
        return s / static_cast<double>(taus.size());
    }

    /// Fraction of runs with tau < bound / delta; censored runs never count.
    double fraction_below_markov(double delta) const {
        if (taus.empty()) return 0.0;
        const double thr = bound_expectation / delta;
        std::size_t hits = 0;
        for (const auto& r : taus)
            if (r.tau && static_cast<double>(*r.tau) < thr) ++hits;
        return static_cast<double>(hits) / static_cast<double>(taus.size());
    }
};

/// Runs `task(k)` for k in [0, count) on up to `threads` workers. Output slots
/// are indexed by k, so aggregation does not depend on scheduling. The first
/// exception thrown by any task is rethrown after all workers finish.
inline void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& task) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (std::size_t k = 0; k < count; ++k) task(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < count; k = next++) {
                try {
                    task(k);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

struct MonteCarloResult {
    HittingStats stats;
    std::vector<SgdRun> runs;  ///< one per seed, in seed-list order
};

/// Adaptive SGD for every seed. `cap == 0` means ten times the expectation bound.
inline MonteCarloResult montecarlo_sgd(const Dataset& data, double gamma, double epsilon,
                                       const std::vector<std::uint64_t>& seeds, std::size_t cap,
                                       const SgdOptions& opts = {}, std::size_t threads = 0) {
    if (seeds.empty()) throw InvalidInput("montecarlo_sgd: seed list is empty");
    MonteCarloResult out;
    out.stats.epsilon = epsilon;
    out.stats.n = data.size();
    out.stats.gamma = gamma;
    out.stats.bound_expectation = sgd_expectation_bound(data.size(), gamma, epsilon);
    if (cap == 0) cap = static_cast<std::size_t>(std::ceil(10.0 * out.stats.bound_expectation));

    out.runs.resize(seeds.size());
    parallel_for(seeds.size(), threads,
                 [&](std::size_t k) { out.runs[k] = run_adaptive_sgd(data, epsilon, seeds[k], cap, opts); });

    HittingStats merged;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
        HittingStats one = out.stats;
        one.taus = {HittingRecord{seeds[k], out.runs[k].tau, cap}};
        merged.merge(one);
    }
    out.stats = std::move(merged);
    return out;
}

/// Seed-averaged one-step drift E[D_{t+1} - D_t | t < tau] at each matched t,
/// averaged over the runs still before their hitting time. Reported, not asserted.
inline std::vector<double> conditional_drift_estimate(const std::vector<SgdRun>& runs) {
    std::size_t horizon = 0;
    for (const auto& r : runs)
        if (r.drift) horizon = std::max(horizon, r.drift->increments.size());
    std::vector<double> mean(horizon, 0.0);
    for (std::size_t t = 0; t < horizon; ++t) {
        double s = 0.0;
        std::size_t c = 0;
        for (const auto& r : runs)
            if (r.drift && t < r.drift->increments.size()) {
                s += r.drift->increments[t];
                ++c;
            }
        mean[t] = s / static_cast<double>(c);
    }
    return mean;
}

}  // namespace sepgd
