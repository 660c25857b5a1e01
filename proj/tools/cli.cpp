#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>

#include "experiment_config.hpp"
#include "sepgd/analysis.hpp"
#include "sepgd/data_gen.hpp"
#include "sepgd/montecarlo.hpp"
#include "sepgd/optimizers.hpp"
#include "sepgd/schedule.hpp"
#include "sepgd/trace_io.hpp"
#include "sepgd/verify.hpp"

namespace fs = std::filesystem;

namespace sepgd::cli {
namespace {

/// Human-readable line plus a greppable key=value twin.
class Summary {
public:
    explicit Summary(std::ostream& out) : out_(out) { out_ << std::setprecision(10); }

    template <class T>
    void kv(const std::string& key, const T& value) {
        out_ << key << '=' << value << '\n';
    }
    void text(const std::string& line) { out_ << line << '\n'; }

private:
    std::ostream& out_;
};

std::string resolve_out_dir(const ExperimentConfig& cfg) {
    if (!cfg.out_dir.empty()) return cfg.out_dir;
    if (const char* env = std::getenv("SEPGD_OUT_DIR"); env && *env) return env;
    return ".";
}

fs::path prepare_out_dir(const ExperimentConfig& cfg) {
    const fs::path dir = resolve_out_dir(cfg);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    return dir;
}

template <class Fn>
void write_file(const fs::path& path, Fn&& fn) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    fn(out);
    out.flush();
    if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::string default_certificate_path(const std::string& data_path) {
    fs::path p(data_path);
    if (p.extension() == ".csv") p.replace_extension();
    return p.string() + ".cert.json";
}

/// Dataset plus the margin every run is parameterised by.
struct Loaded {
    Dataset data;
    double gamma = 0.0;
    bool certified = false;
};

Loaded load_input(const ExperimentConfig& cfg, std::ostream& err, bool normalize = true) {
    if (cfg.data.path.empty()) throw ConfigError("no dataset given (--data)");
    CsvOptions opts;
    opts.skip_header = cfg.data.skip_header;
    opts.normalize = normalize;
    LoadedCsv csv = load_csv(cfg.data.path, opts);
    if (csv.scale != 1.0) err << "features divided by " << std::setprecision(17) << csv.scale << '\n';

    Loaded in{std::move(csv.data), 0.0, false};
    const std::string cert_path =
        cfg.data.certificate.empty() ? default_certificate_path(cfg.data.path) : cfg.data.certificate;
    if (fs::exists(cert_path)) {
        MarginCertificate cert = load_certificate(cert_path);
        if (csv.scale != 1.0) cert.margin /= csv.scale;
        in.data.set_certificate(cert);
        in.gamma = cert.margin;
        in.certified = true;
    } else if (!cfg.data.certificate.empty()) {
        throw IoError("cannot open certificate '" + cert_path + "'");
    }
    if (cfg.data.gamma) in.gamma = *cfg.data.gamma;
    if (!(in.gamma > 0.0)) throw ConfigError("no margin certificate found at '" + cert_path + "' and no --gamma given");
    return in;
}

// --------------------------------------------------------------------------

int cmd_gen(const ExperimentConfig& cfg, Summary& sum) {
    const GenSpec spec{cfg.gen.dim, cfg.gen.count, cfg.gen.margin, cfg.gen.seed};
    try {
        spec.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    const Dataset data = generate_separable(spec);
    const fs::path dir = prepare_out_dir(cfg);
    const fs::path csv = dir / (cfg.gen.name + ".csv");
    const fs::path cert = dir / (cfg.gen.name + ".cert.json");
    write_file(csv, [&](std::ostream& o) { write_csv(o, data); });
    save_certificate(cert.string(), *data.certificate());

    const double m = verify_margin(data, *data.certificate());
    sum.text("generated " + std::to_string(data.size()) + " points in R^" + std::to_string(data.dim()));
    sum.kv("dataset", csv.string());
    sum.kv("certificate", cert.string());
    sum.kv("gamma", spec.margin);
    sum.kv("verified_margin", m);
    sum.kv("max_row_norm", data.max_row_norm());
    return m >= spec.margin ? kOk : kVerificationFailed;
}

int cmd_run_gd(const ExperimentConfig& cfg, Summary& sum, std::ostream& err) {
    const Loaded in = load_input(cfg, err);
    const std::size_t d = in.data.dim();
    GdOptions opts;
    opts.fail_fast = false;
    const GdScheduleRun run = run_gd_schedule(in.data, in.gamma, Weights::zeros(d), cfg.gd.steps, opts);
    const GdAudit audit = audit_gd_run(run);

    const fs::path dir = prepare_out_dir(cfg);
    write_file(dir / "gd_trace.csv", [&](std::ostream& o) { write_trace_csv(o, run.trace); });
    std::vector<ScheduleRow> rows;
    rows.reserve(run.trace.records.size());
    {
        ScheduleState s = start_schedule(in.gamma, initial_eta(Weights::zeros(d)), run.F0);
        rows.push_back(schedule_row(s));
        for (std::size_t t = 1; t <= cfg.gd.steps; ++t) {
            s = advance(s);
            rows.push_back(schedule_row(s));
        }
    }
    write_file(dir / "gd_schedule.csv", [&](std::ostream& o) { write_schedule_csv(o, rows); });

    const CrossingBrackets br = crossing_time_brackets(run.S0, run.F0, in.gamma);
    bool brackets_ok = true;
    if (run.schedule.tau1) brackets_ok = brackets_ok && br.tau1_contains(*run.schedule.tau1);
    if (run.schedule.tau2) brackets_ok = brackets_ok && br.tau2_contains(*run.schedule.tau2);

    const std::size_t violations = audit.stability_violations + audit.monotone_violations +
                                   audit.stable_phase_violations + audit.sandwich_violations +
                                   audit.pointwise_violations;
    sum.text("schedule GD, " + std::to_string(cfg.gd.steps) + " steps, gamma = " + std::to_string(in.gamma));
    sum.kv("tau1", run.schedule.tau1 ? std::to_string(*run.schedule.tau1) : "none");
    sum.kv("tau2", run.schedule.tau2 ? std::to_string(*run.schedule.tau2) : "none");
    sum.kv("terminal_loss", run.trace.records.back().loss);
    sum.kv("S_T", run.schedule.S);
    sum.kv("stability_violations", audit.stability_violations);
    sum.kv("monotone_violations", audit.monotone_violations);
    sum.kv("stable_phase_violations", audit.stable_phase_violations);
    sum.kv("sandwich_checked", audit.sandwich_checked);
    sum.kv("sandwich_violations", audit.sandwich_violations);
    sum.kv("pointwise_violations", audit.pointwise_violations);
    sum.kv("violations", violations);
    sum.kv("brackets_ok", brackets_ok ? 1 : 0);
    if (run.schedule.tau2 && *run.schedule.tau2 + 100 < cfg.gd.steps) {
        const LinearFit fit = fit_growth(run.trace.records, *run.schedule.tau2 + 100, cfg.gd.steps);
        sum.kv("growth_slope", fit.slope);
        sum.kv("growth_r2", fit.r_squared);
    }
    if (audit.first_failure)
        sum.text("first violation at t = " + std::to_string(audit.first_failure->t) + ": " +
                 audit.first_failure->what);
    return violations == 0 && brackets_ok ? kOk : kVerificationFailed;
}

int cmd_run_gd_const(const ExperimentConfig& cfg, Summary& sum, std::ostream& err) {
    const Loaded in = load_input(cfg, err);
    if (cfg.gd.constant_etas.empty()) throw ConfigError("no constant step sizes given (--eta)");
    const fs::path dir = prepare_out_dir(cfg);
    int status = kOk;
    for (double eta : cfg.gd.constant_etas) {
        std::ostringstream tag;
        tag << eta;
        try {
            const RunTrace trace = run_gd_constant(in.data, eta, Weights::zeros(in.data.dim()), cfg.gd.steps);
            write_file(dir / ("gd_const_eta" + tag.str() + ".csv"),
                       [&](std::ostream& o) { write_trace_csv(o, trace); });
            sum.kv("terminal_loss_eta" + tag.str(), trace.records.back().loss);
        } catch (const DivergenceError& e) {
            sum.text("eta = " + tag.str() + " diverged at t = " + std::to_string(e.iteration()));
            sum.kv("diverged_eta" + tag.str(), e.iteration());
            status = kVerificationFailed;
        }
    }
    return status;
}

/// Loss averaged over seeds at matched t; runs that already hit contribute
/// their terminal loss.
std::vector<std::pair<std::size_t, double>> seed_average(const std::vector<SgdRun>& runs) {
    std::size_t horizon = 0;
    for (const auto& r : runs) horizon = std::max(horizon, r.trace.records.back().t);
    std::vector<std::pair<std::size_t, double>> out;
    std::vector<std::size_t> cursor(runs.size(), 0);
    for (std::size_t t = 0; t <= horizon; ++t) {
        double s = 0.0;
        bool all = true;
        for (std::size_t k = 0; k < runs.size(); ++k) {
            const auto& rec = runs[k].trace.records;
            while (cursor[k] + 1 < rec.size() && rec[cursor[k] + 1].t <= t) ++cursor[k];
            if (rec[cursor[k]].t != t && cursor[k] + 1 < rec.size()) all = false;
            s += rec[cursor[k]].loss;
        }
        if (all) out.emplace_back(t, s / static_cast<double>(runs.size()));
    }
    return out;
}

SgdOptions sgd_options(const ExperimentConfig& cfg, const Loaded& in) {
    SgdOptions opts;
    opts.audit = cfg.sgd.audit;
    opts.record_every = cfg.sgd.record_every;
    if (opts.audit && !in.certified)
        throw ConfigError("the SGD drift audit needs a certificate direction; pass --no-audit to run without");
    return opts;
}

int cmd_run_sgd(const ExperimentConfig& cfg, Summary& sum, std::ostream& err) {
    if (cfg.seeds.empty()) throw ConfigError("seed list is empty");
    const Loaded in = load_input(cfg, err);
    const SgdOptions opts = sgd_options(cfg, in);
    const fs::path dir = prepare_out_dir(cfg);
    const MonteCarloResult mc = montecarlo_sgd(in.data, in.gamma, cfg.sgd.epsilon, cfg.seeds, cfg.sgd.cap, opts, 1);

    for (std::size_t k = 0; k < cfg.seeds.size(); ++k) {
        const auto& run = mc.runs[k];
        write_file(dir / ("sgd_trace_seed" + std::to_string(cfg.seeds[k]) + ".csv"),
                   [&](std::ostream& o) { write_trace_csv(o, run.trace); });
        sum.kv("tau_seed" + std::to_string(cfg.seeds[k]), run.tau ? std::to_string(*run.tau) : "censored");
        if (run.drift) {
            sum.kv("max_pathwise_excess_seed" + std::to_string(cfg.seeds[k]), run.drift->max_pathwise_excess);
            sum.kv("mean_increment_seed" + std::to_string(cfg.seeds[k]), run.drift->mean_increment());
        }
    }
    write_file(dir / "sgd_mean_trace.csv", [&](std::ostream& o) {
        o << "t,mean_loss\n" << std::setprecision(17);
        for (const auto& [t, l] : seed_average(mc.runs)) o << t << ',' << l << '\n';
    });
    sum.text("adaptive SGD, eps = " + std::to_string(cfg.sgd.epsilon) + ", " + std::to_string(cfg.seeds.size()) +
             " seeds");
    sum.kv("mean_tau", mc.stats.mean_tau());
    sum.kv("bound", mc.stats.bound_expectation);
    sum.kv("censored", mc.stats.censored_count());
    return mc.stats.censored_count() == 0 ? kOk : kVerificationFailed;
}

int cmd_montecarlo(const ExperimentConfig& cfg, Summary& sum, std::ostream& err) {
    if (cfg.seeds.empty()) throw ConfigError("seed list is empty");
    const Loaded in = load_input(cfg, err);
    const SgdOptions opts = sgd_options(cfg, in);
    const fs::path dir = prepare_out_dir(cfg);
    const MonteCarloResult mc =
        montecarlo_sgd(in.data, in.gamma, cfg.sgd.epsilon, cfg.seeds, cfg.sgd.cap, opts, cfg.montecarlo.threads);
    write_file(dir / "hitting.csv", [&](std::ostream& o) { write_hitting_csv(o, mc.stats); });

    const double mean = mc.stats.mean_tau();
    sum.text("Monte-Carlo hitting times over " + std::to_string(cfg.seeds.size()) + " seeds");
    sum.kv("runs", mc.stats.taus.size());
    sum.kv("censored", mc.stats.censored_count());
    sum.kv("mean_tau", mean);
    sum.kv("bound", mc.stats.bound_expectation);
    sum.kv("mean_below_bound", mean <= mc.stats.bound_expectation ? 1 : 0);
    for (double delta : cfg.montecarlo.deltas) {
        std::ostringstream key;
        key << "fraction_below_markov_delta" << delta;
        sum.kv(key.str(), mc.stats.fraction_below_markov(delta));
    }
    if (mc.stats.censored_count() > 0) sum.text("warning: censored runs present; mean_tau is a lower bound");
    return mc.stats.censored_count() == 0 && mean <= mc.stats.bound_expectation ? kOk : kVerificationFailed;
}

int cmd_run_block(const ExperimentConfig& cfg, Summary& sum, std::ostream& err) {
    if (cfg.seeds.empty()) throw ConfigError("seed list is empty");
    const Loaded in = load_input(cfg, err);
    BlockOptions opts;
    if (cfg.block.monitor == "every_step")
        opts.monitor = LossMonitor::every_step;
    else if (cfg.block.monitor == "certified_skip")
        opts.monitor = LossMonitor::certified_skip;
    else
        throw ConfigError("unknown loss monitor '" + cfg.block.monitor + "'");

    BlockPlan plan;
    try {
        plan = make_block_plan(in.data.size(), in.gamma, cfg.block.eps0, cfg.block.delta, cfg.block.target);
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    const fs::path dir = prepare_out_dir(cfg);
    write_file(dir / "block_plan.csv", [&](std::ostream& o) {
        o << "k,eps,length,start\n" << std::setprecision(17);
        for (const auto& b : plan.blocks) o << b.k << ',' << b.eps << ',' << b.length << ',' << b.start << '\n';
    });

    std::vector<BlockRun> runs(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), cfg.montecarlo.threads,
                 [&](std::size_t k) { runs[k] = run_block_sgd(in.data, plan, cfg.seeds[k], opts); });

    std::size_t reached = 0;
    write_file(dir / "block_runs.csv", [&](std::ostream& o) {
        o << "seed,reached_target,first_hit,min_loss,post_activation_tau,censored,steps\n" << std::setprecision(17);
        for (std::size_t k = 0; k < runs.size(); ++k) {
            const auto& r = runs[k];
            reached += r.reached_target ? 1 : 0;
            o << cfg.seeds[k] << ',' << (r.reached_target ? 1 : 0) << ',';
            if (r.first_hit) o << *r.first_hit;
            o << ',' << r.min_loss << ',';
            if (r.post_activation_tau) o << *r.post_activation_tau;
            o << ',' << (r.censored ? 1 : 0) << ',' << r.steps << '\n';
        }
    });
    const double fraction = static_cast<double>(reached) / static_cast<double>(runs.size());
    sum.text("block adaptive SGD, " + std::to_string(plan.blocks.size()) + " blocks, k_eps = " +
             std::to_string(plan.k_eps));
    for (const auto& b : plan.blocks) sum.kv("N" + std::to_string(b.k), b.length);
    sum.kv("horizon", plan.total());
    sum.kv("reached_fraction", fraction);
    sum.kv("required_fraction", 1.0 - cfg.block.delta);
    sum.kv("expected_steps_bound", block_expected_steps_bound(plan));
    return kOk;
}

int cmd_verify(const ExperimentConfig& cfg, Summary& sum, std::ostream& err) {
    const Loaded in = load_input(cfg, err, /*normalize=*/false);
    std::optional<MarginCertificate> cert = in.data.certificate();
    if (cert && cfg.data.gamma) cert->margin = *cfg.data.gamma;
    Dataset plain = in.data;
    plain.clear_certificate();

    VerifyOptions opts;
    opts.draws = cfg.verify.draws;
    opts.gd_steps = cfg.verify.gd_steps;
    opts.sgd_cap = cfg.verify.sgd_cap;
    opts.seed = cfg.seeds.empty() ? 1 : cfg.seeds.front();
    const VerifyReport report = verify_dataset(plain, cert, opts);
    for (const auto& p : report.properties) sum.text((p.passed ? "PASS " : "FAIL ") + p.name + ": " + p.detail);
    for (const auto& p : report.properties) sum.kv(p.name, p.passed ? "pass" : "fail");
    sum.kv("verified", report.passed() ? 1 : 0);
    return report.passed() ? kOk : kVerificationFailed;
}

/// argv is scanned for --config before CLI11 sees it so the file supplies
/// defaults that explicit flags then override.
std::optional<std::string> prescan_config(const std::vector<std::string>& args) {
    for (std::size_t k = 0; k < args.size(); ++k) {
        if (args[k] == "--config" && k + 1 < args.size()) return args[k + 1];
        if (args[k].rfind("--config=", 0) == 0) return args[k].substr(9);
    }
    return std::nullopt;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg;
    try {
        if (const auto path = prescan_config(args)) cfg = load_config(*path);
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kIoError;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    }

    CLI::App app{"Increasing-step GD and adaptive SGD for separable logistic regression"};
    app.require_subcommand(1);
    std::string config_path, write_config;
    app.add_option("--config", config_path, "JSON experiment config; flags override it");
    app.add_option("--write-config", write_config, "write the effective config to this path");
    app.add_option("--out-dir", cfg.out_dir, "output directory (default $SEPGD_OUT_DIR, then .)");
    app.add_option("--seeds", cfg.seeds, "seed list")->delimiter(',');

    auto add_data = [&](CLI::App* sub) {
        sub->add_option("--data", cfg.data.path, "dataset CSV (label first)");
        sub->add_option("--cert", cfg.data.certificate, "certificate JSON (default <data>.cert.json)");
        sub->add_flag("--skip-header", cfg.data.skip_header, "skip one header line");
        sub->add_option_function<double>(
            "--gamma", [&](double g) { cfg.data.gamma = g; }, "margin override");
    };

    auto* gen = app.add_subcommand("gen-data", "generate a separable dataset and its certificate");
    gen->add_option("--dim", cfg.gen.dim);
    gen->add_option("--count", cfg.gen.count);
    gen->add_option("--margin", cfg.gen.margin);
    gen->add_option("--seed", cfg.gen.seed);
    gen->add_option("--name", cfg.gen.name, "file stem");

    auto* gd = app.add_subcommand("run-gd", "GD with the increasing step-size schedule");
    add_data(gd);
    gd->add_option("--steps", cfg.gd.steps);

    auto* gdc = app.add_subcommand("run-gd-const", "constant-step GD baselines");
    add_data(gdc);
    gdc->add_option("--steps", cfg.gd.steps);
    gdc->add_option("--eta", cfg.gd.constant_etas, "step sizes")->delimiter(',');

    auto add_sgd = [&](CLI::App* sub) {
        add_data(sub);
        sub->add_option("--epsilon", cfg.sgd.epsilon);
        sub->add_option("--cap", cfg.sgd.cap, "step cap per run (0: ten times the bound)");
        sub->add_flag("--audit,!--no-audit", cfg.sgd.audit, "check the pathwise drift inequality");
        sub->add_option("--record-every", cfg.sgd.record_every);
    };
    auto* sgd = app.add_subcommand("run-sgd", "adaptive SGD with per-seed traces");
    add_sgd(sgd);
    auto* mc = app.add_subcommand("montecarlo", "hitting-time statistics over the seed list");
    add_sgd(mc);
    mc->add_option("--delta", cfg.montecarlo.deltas, "Markov confidence levels")->delimiter(',');
    mc->add_option("--threads", cfg.montecarlo.threads, "workers (0: hardware)");

    auto* block = app.add_subcommand("run-block", "block adaptive SGD");
    add_data(block);
    block->add_option("--eps0", cfg.block.eps0);
    block->add_option("--delta", cfg.block.delta);
    block->add_option("--target", cfg.block.target);
    block->add_option("--monitor", cfg.block.monitor)->check(CLI::IsMember({"certified_skip", "every_step"}));
    block->add_option("--threads", cfg.montecarlo.threads, "workers (0: hardware)");

    auto* verify = app.add_subcommand("verify", "run the invariant suite on a dataset");
    add_data(verify);
    verify->add_option("--draws", cfg.verify.draws);
    verify->add_option("--gd-steps", cfg.verify.gd_steps);
    verify->add_option("--sgd-cap", cfg.verify.sgd_cap);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    }

    Summary sum(out);
    try {
        if (!write_config.empty()) save_config(write_config, cfg);
        if (gen->parsed()) return cmd_gen(cfg, sum);
        if (gd->parsed()) return cmd_run_gd(cfg, sum, err);
        if (gdc->parsed()) return cmd_run_gd_const(cfg, sum, err);
        if (sgd->parsed()) return cmd_run_sgd(cfg, sum, err);
        if (mc->parsed()) return cmd_montecarlo(cfg, sum, err);
        if (block->parsed()) return cmd_run_block(cfg, sum, err);
        if (verify->parsed()) return cmd_verify(cfg, sum, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const InvalidInput& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << '\n';
        return kIoError;
    } catch (const ParseError& e) {
        err << "io error: " << cfg.data.path << ": " << e.what() << '\n';
        return kIoError;
    } catch (const Error& e) {
        // theorem violations, numeric failures, non-separable input
        err << "verification failure: " << e.what() << '\n';
        return kVerificationFailed;
    }
    return kConfigError;
}

}  // namespace sepgd::cli
