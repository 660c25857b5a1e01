#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "sepgd/analysis.hpp"
#include "sepgd/data_gen.hpp"
#include "sepgd/montecarlo.hpp"
#include "sepgd/optimizers.hpp"

using namespace sepgd;

namespace {

const Dataset& small_data() {
    static const Dataset data = generate_separable({5, 60, 0.3, 12});
    return data;
}

}  // namespace

TEST(GdSchedule, OneStepUnrolls) {
    const Dataset& data = small_data();
    const GdScheduleRun run = run_gd_schedule(data, 0.3, Weights::zeros(5), 1);
    ASSERT_EQ(run.trace.records.size(), 2u);
    const Vector g = full_gradient(Weights::zeros(5), data);
    for (std::size_t k = 0; k < 5; ++k)
        EXPECT_DOUBLE_EQ(run.trace.final_weights[k], -(1.0 / std::numbers::ln2) * g[k]);
    EXPECT_DOUBLE_EQ(run.trace.records[0].loss * *run.trace.records[0].eta, 1.0);
}

TEST(GdSchedule, InvariantsOnSmallRun) {
    const Dataset& data = small_data();
    const GdScheduleRun run = run_gd_schedule(data, 0.3, Weights::zeros(5), 3000);
    EXPECT_TRUE(run.violations.empty());
    const GdAudit a = audit_gd_run(run);
    EXPECT_EQ(a.stability_violations, 0u);
    EXPECT_EQ(a.monotone_violations, 0u);
    EXPECT_EQ(a.stable_phase_violations, 0u);
    EXPECT_EQ(a.sandwich_violations, 0u);
    EXPECT_EQ(a.pointwise_violations, 0u);
    EXPECT_GT(a.sandwich_checked, 0u);
    ASSERT_TRUE(run.schedule.tau2.has_value());
    EXPECT_TRUE(crossing_time_brackets(run.S0, run.F0, 0.3).tau2_contains(*run.schedule.tau2));
    for (std::size_t t = 1; t < run.trace.records.size(); ++t)
        EXPECT_LE(run.trace.records[t].loss, run.trace.records[t - 1].loss + 1e-12);
}

TEST(GdSchedule, Deterministic) {
    const Dataset& data = small_data();
    const auto a = run_gd_schedule(data, 0.3, Weights::zeros(5), 200);
    const auto b = run_gd_schedule(data, 0.3, Weights::zeros(5), 200);
    EXPECT_EQ(a.trace.final_weights, b.trace.final_weights);
}

TEST(GdSchedule, RejectsOverstatedMargin) {
    const Dataset& data = small_data();
    EXPECT_THROW(run_gd_schedule(data, 0.9, Weights::zeros(5), 10), InvalidInput);
    EXPECT_THROW(run_gd_schedule(data, 0.3, Weights::zeros(4), 10), InvalidInput);
    const Dataset big(1, 1, {2.0}, {1.0});
    EXPECT_THROW(run_gd_schedule(big, 0.3, Weights::zeros(1), 10), InvalidInput);
}

TEST(GdConstant, ZeroStepKeepsWeights) {
    const Dataset& data = small_data();
    Weights w0 = Weights::zeros(5);
    w0[2] = 0.7;
    const RunTrace trace = run_gd_constant(data, 0.0, w0, 50);
    EXPECT_EQ(trace.final_weights, w0);
    for (const auto& r : trace.records) EXPECT_EQ(r.loss, trace.records.front().loss);
}

TEST(GdConstant, ClassicalStepDecreases) {
    const Dataset& data = small_data();
    const RunTrace trace = run_gd_constant(data, 2.0, Weights::zeros(5), 500);
    for (std::size_t t = 1; t < trace.records.size(); ++t)
        EXPECT_LE(trace.records[t].loss, trace.records[t - 1].loss);
}

TEST(GdConstant, DivergenceIsReported) {
    // non-separable one-dimensional data with a huge step oscillates outward
    const Dataset data(2, 1, {1.0, 1.0}, {1.0, -1.0});
    Weights w0({1e13});
    EXPECT_THROW(run_gd_constant(data, 1.0, w0, 5), DivergenceError);
    EXPECT_THROW(run_gd_constant(data, -1.0, Weights::zeros(1), 5), InvalidInput);
}

TEST(AdaptiveStep, MinArithmetic) {
    EXPECT_DOUBLE_EQ(adaptive_step(0.02, 0.01), 50.0);
    EXPECT_DOUBLE_EQ(adaptive_step(0.0, 0.01), 100.0);
    EXPECT_DOUBLE_EQ(adaptive_step(0.001, 0.01), 100.0);
    EXPECT_DOUBLE_EQ(adaptive_step(2.0, 0.01), 0.5);
}

TEST(IndexSampler, UniformWithinFiveSigma) {
    const std::size_t n = 37;
    const std::size_t draws = 1'000'000;
    IndexSampler s(n, 2024);
    std::vector<std::size_t> counts(n, 0);
    for (std::size_t k = 0; k < draws; ++k) ++counts[s()];
    const double p = 1.0 / static_cast<double>(n);
    const double sigma = std::sqrt(static_cast<double>(draws) * p * (1.0 - p));
    for (std::size_t i = 0; i < n; ++i)
        EXPECT_LT(std::abs(static_cast<double>(counts[i]) - static_cast<double>(draws) * p), 5.0 * sigma) << i;
}

TEST(AdaptiveSgd, FirstHittingSemantics) {
    const Dataset& data = small_data();
    SgdOptions opts;
    opts.audit = true;
    const SgdRun run = run_adaptive_sgd(data, 0.05, 3, 100000, opts);
    ASSERT_TRUE(run.tau.has_value());
    const auto& rec = run.trace.records;
    ASSERT_EQ(rec.size(), *run.tau + 1);
    for (std::size_t t = 0; t < *run.tau; ++t) {
        EXPECT_EQ(rec[t].t, t);
        EXPECT_GT(rec[t].loss, 0.05);
        EXPECT_LE(*rec[t].eta, 1.0 / 0.05);
    }
    EXPECT_LE(rec.back().loss, 0.05);
    EXPECT_EQ(full_loss(run.trace.final_weights, data), rec.back().loss);
    EXPECT_FALSE(rec.back().eta.has_value());
    ASSERT_TRUE(run.drift.has_value());
    EXPECT_EQ(run.drift->steps_checked, *run.tau);
    EXPECT_LE(run.drift->max_pathwise_excess, 1e-10);
    EXPECT_GE(run.drift->min_top_loss_ratio, 1.0);
    EXPECT_LE(run.drift->comparator_loss, run.drift->comparator_bound);
}

TEST(AdaptiveSgd, SeedDeterminesRun) {
    const Dataset& data = small_data();
    const SgdRun a = run_adaptive_sgd(data, 0.05, 9, 100000);
    const SgdRun b = run_adaptive_sgd(data, 0.05, 9, 100000);
    EXPECT_EQ(a.tau, b.tau);
    EXPECT_EQ(a.trace.final_weights, b.trace.final_weights);
}

TEST(AdaptiveSgd, CensoredAtCap) {
    const Dataset& data = small_data();
    const SgdRun run = run_adaptive_sgd(data, 1e-6, 1, 3);
    EXPECT_TRUE(run.censored);
    EXPECT_FALSE(run.tau.has_value());
    EXPECT_EQ(run.steps, 3u);
}

TEST(AdaptiveSgd, RejectsBadEpsilon) {
    const Dataset& data = small_data();
    EXPECT_THROW(run_adaptive_sgd(data, std::numbers::ln2, 1, 10), InvalidInput);
    EXPECT_THROW(run_adaptive_sgd(data, 0.0, 1, 10), InvalidInput);
    SgdOptions opts;
    opts.audit = true;
    Dataset plain = data;
    plain.clear_certificate();
    EXPECT_THROW(run_adaptive_sgd(plain, 0.1, 1, 10, opts), InvalidInput);
}

TEST(ExpectationBound, Formula) {
    EXPECT_DOUBLE_EQ(sgd_expectation_bound(5000, 0.2, 1e-2),
                     2.0 * 5000 / 0.04 * std::pow(std::log(4.0 * 5000 / 1e-2), 2));
}

TEST(MonteCarlo, ThreadedMatchesSerialAndMergeCommutes) {
    const Dataset& data = small_data();
    const std::vector<std::uint64_t> seeds{5, 1, 4, 2, 3};
    const auto serial = montecarlo_sgd(data, 0.3, 0.05, seeds, 0, {}, 1);
    const auto threaded = montecarlo_sgd(data, 0.3, 0.05, seeds, 0, {}, 3);
    EXPECT_EQ(serial.stats.taus, threaded.stats.taus);
    for (std::size_t k = 1; k < serial.stats.taus.size(); ++k)
        EXPECT_LT(serial.stats.taus[k - 1].seed, serial.stats.taus[k].seed);

    const auto a = montecarlo_sgd(data, 0.3, 0.05, {1, 2}, 0, {}, 1).stats;
    const auto b = montecarlo_sgd(data, 0.3, 0.05, {3}, 0, {}, 1).stats;
    HittingStats ab = a, ba = b;
    ab.merge(b);
    ba.merge(a);
    EXPECT_EQ(ab.taus, ba.taus);
    EXPECT_EQ(ab.mean_tau(), ba.mean_tau());

    HittingStats other = a;
    other.epsilon = 0.1;
    EXPECT_THROW(ab.merge(other), InvalidInput);
}

TEST(MonteCarlo, SingleSeedDegenerates) {
    const Dataset& data = small_data();
    const auto mc = montecarlo_sgd(data, 0.3, 0.05, {7}, 0, {}, 1);
    ASSERT_EQ(mc.stats.taus.size(), 1u);
    EXPECT_EQ(mc.stats.mean_tau(), static_cast<double>(*mc.runs[0].tau));
    EXPECT_EQ(mc.stats.fraction_below_markov(0.5), 1.0);
    EXPECT_THROW(montecarlo_sgd(data, 0.3, 0.05, {}, 0), InvalidInput);
}

TEST(BlockPlan, LengthFormula) {
    EXPECT_EQ(block_length(10, 1.0, 0.5, 0.1), 4355u);
    const double l = std::log(1600.0);
    EXPECT_NEAR(l * l, 54.4313265, 1e-7);
    EXPECT_EQ(static_cast<std::uint64_t>(std::ceil(80.0 * l * l)), 4355u);
}

TEST(BlockPlan, Halving) {
    const BlockPlan plan = make_block_plan(200, 0.2, 0.4, 0.2, 0.1);
    ASSERT_EQ(plan.blocks.size(), 3u);
    EXPECT_EQ(plan.k_eps, 2u);
    EXPECT_EQ(plan.blocks[0].eps, 0.4);
    EXPECT_EQ(plan.blocks[1].eps, 0.2);
    EXPECT_EQ(plan.blocks[2].eps, 0.1);
    std::uint64_t s = 0;
    for (const auto& b : plan.blocks) {
        EXPECT_EQ(b.start, s);
        const double l = std::log(8.0 * 200 / (0.2 * b.eps));
        EXPECT_EQ(b.length, static_cast<std::uint64_t>(std::ceil(4.0 * 200 / (0.2 * 0.04) * l * l)));
        s += b.length;
    }
    EXPECT_EQ(plan.total(), s);

    const BlockPlan one = make_block_plan(200, 0.2, 0.3, 0.2, 0.3);
    EXPECT_EQ(one.blocks.size(), 1u);
    EXPECT_EQ(one.k_eps, 0u);
    EXPECT_THROW(make_block_plan(200, 0.2, 0.4, 0.2, 0.5), InvalidInput);
    EXPECT_THROW(make_block_plan(200, 0.2, 0.4, 1.0, 0.1), InvalidInput);
}

TEST(BlockSgd, CertifiedSkipAgreesWithEveryStep) {
    const Dataset data = generate_separable({3, 20, 0.5, 4});
    const BlockPlan plan = make_block_plan(20, 0.5, 0.4, 0.5, 0.05);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const BlockRun fast = run_block_sgd(data, plan, seed, {LossMonitor::certified_skip});
        const BlockRun full = run_block_sgd(data, plan, seed, {LossMonitor::every_step});
        EXPECT_EQ(fast.reached_target, full.reached_target);
        EXPECT_EQ(fast.first_hit, full.first_hit);
        EXPECT_EQ(fast.post_activation_tau, full.post_activation_tau);
        EXPECT_EQ(fast.censored, full.censored);
        EXPECT_EQ(fast.trace.final_weights, full.trace.final_weights);
        EXPECT_LE(fast.evaluations, full.evaluations);
        EXPECT_LE(fast.max_step_ratio, 1.0);
        EXPECT_TRUE(full.reached_target);
    }
}

TEST(BlockSgd, PlanMustMatchData) {
    const BlockPlan plan = make_block_plan(21, 0.5, 0.4, 0.5, 0.1);
    EXPECT_THROW(run_block_sgd(small_data(), plan, 1), InvalidInput);
}

TEST(Analysis, FitLineRecoversLine) {
    const std::vector<double> x{0, 1, 2, 3, 4};
    const std::vector<double> y{1, 3, 5, 7, 9};
    const LinearFit f = fit_line(x, y);
    EXPECT_DOUBLE_EQ(f.slope, 2.0);
    EXPECT_DOUBLE_EQ(f.intercept, 1.0);
    EXPECT_DOUBLE_EQ(f.r_squared, 1.0);
    EXPECT_THROW(fit_line(std::vector<double>{1.0}, std::vector<double>{1.0}), InvalidInput);
}
