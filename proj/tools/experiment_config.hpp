#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sepgd/errors.hpp"

namespace sepgd::cli {

struct GenConfig {
    std::size_t dim = 80;
    std::size_t count = 1500;
    double margin = 0.5;
    std::uint64_t seed = 7;
    std::string name = "synthetic";
    friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

struct DataConfig {
    std::string path;         // CSV, label first
    std::string certificate;  // empty: <path minus .csv>.cert.json
    bool skip_header = false;
    std::optional<double> gamma;  // overrides the certificate margin
    friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct GdConfig {
    std::size_t steps = 5000;
    std::vector<double> constant_etas{1.0, 2.0};
    friend bool operator==(const GdConfig&, const GdConfig&) = default;
};

struct SgdConfig {
    double epsilon = 1e-2;
    std::size_t cap = 0;  // 0: ten times the expectation bound
    bool audit = true;
    std::size_t record_every = 1;
    friend bool operator==(const SgdConfig&, const SgdConfig&) = default;
};

struct BlockConfig {
    double eps0 = 0.4;
    double delta = 0.2;
    double target = 0.1;
    std::string monitor = "certified_skip";  // or "every_step"
    friend bool operator==(const BlockConfig&, const BlockConfig&) = default;
};

struct MonteCarloConfig {
    std::vector<double> deltas{0.5};
    std::size_t threads = 0;
    friend bool operator==(const MonteCarloConfig&, const MonteCarloConfig&) = default;
};

struct VerifyConfig {
    std::size_t draws = 100;
    std::size_t gd_steps = 200;
    std::size_t sgd_cap = 2000;
    friend bool operator==(const VerifyConfig&, const VerifyConfig&) = default;
};

struct ExperimentConfig {
    std::string out_dir;  // empty: $SEPGD_OUT_DIR, then "."
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    GenConfig gen;
    DataConfig data;
    GdConfig gd;
    SgdConfig sgd;
    BlockConfig block;
    MonteCarloConfig montecarlo;
    VerifyConfig verify;
    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, _] : j.items())
        if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& field, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        field = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["out_dir"] = c.out_dir;
    j["seeds"] = c.seeds;
    j["gen"] = {{"dim", c.gen.dim}, {"count", c.gen.count}, {"margin", c.gen.margin},
                {"seed", c.gen.seed}, {"name", c.gen.name}};
    j["data"] = {{"path", c.data.path}, {"certificate", c.data.certificate}, {"skip_header", c.data.skip_header},
                 {"gamma", c.data.gamma ? nlohmann::json(*c.data.gamma) : nlohmann::json(nullptr)}};
    j["gd"] = {{"steps", c.gd.steps}, {"constant_etas", c.gd.constant_etas}};
    j["sgd"] = {{"epsilon", c.sgd.epsilon}, {"cap", c.sgd.cap}, {"audit", c.sgd.audit},
                {"record_every", c.sgd.record_every}};
    j["block"] = {{"eps0", c.block.eps0}, {"delta", c.block.delta}, {"target", c.block.target},
                  {"monitor", c.block.monitor}};
    j["montecarlo"] = {{"deltas", c.montecarlo.deltas}, {"threads", c.montecarlo.threads}};
    j["verify"] = {{"draws", c.verify.draws}, {"gd_steps", c.verify.gd_steps}, {"sgd_cap", c.verify.sgd_cap}};
    return j;
}

/// Missing keys keep their defaults; unknown keys are an error at every level.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    using detail::read;
    detail::reject_unknown(j, "config",
                           {"out_dir", "seeds", "gen", "data", "gd", "sgd", "block", "montecarlo", "verify"});
    ExperimentConfig c;
    read(j, "out_dir", c.out_dir, "config");
    read(j, "seeds", c.seeds, "config");

    auto section = [&](const char* name, std::initializer_list<const char*> keys, auto&& body) {
        if (!j.contains(name)) return;
        const auto& s = j.at(name);
        const std::string where = std::string("config.") + name;
        detail::reject_unknown(s, where, keys);
        body(s, where);
    };
    section("gen", {"dim", "count", "margin", "seed", "name"}, [&](const auto& s, const auto& w) {
        read(s, "dim", c.gen.dim, w);
        read(s, "count", c.gen.count, w);
        read(s, "margin", c.gen.margin, w);
        read(s, "seed", c.gen.seed, w);
        read(s, "name", c.gen.name, w);
    });
    section("data", {"path", "certificate", "skip_header", "gamma"}, [&](const auto& s, const auto& w) {
        read(s, "path", c.data.path, w);
        read(s, "certificate", c.data.certificate, w);
        read(s, "skip_header", c.data.skip_header, w);
        if (s.contains("gamma") && !s.at("gamma").is_null()) {
            double g = 0.0;
            read(s, "gamma", g, w);
            c.data.gamma = g;
        }
    });
    section("gd", {"steps", "constant_etas"}, [&](const auto& s, const auto& w) {
        read(s, "steps", c.gd.steps, w);
        read(s, "constant_etas", c.gd.constant_etas, w);
    });
    section("sgd", {"epsilon", "cap", "audit", "record_every"}, [&](const auto& s, const auto& w) {
        read(s, "epsilon", c.sgd.epsilon, w);
        read(s, "cap", c.sgd.cap, w);
        read(s, "audit", c.sgd.audit, w);
        read(s, "record_every", c.sgd.record_every, w);
    });
    section("block", {"eps0", "delta", "target", "monitor"}, [&](const auto& s, const auto& w) {
        read(s, "eps0", c.block.eps0, w);
        read(s, "delta", c.block.delta, w);
        read(s, "target", c.block.target, w);
        read(s, "monitor", c.block.monitor, w);
    });
    section("montecarlo", {"deltas", "threads"}, [&](const auto& s, const auto& w) {
        read(s, "deltas", c.montecarlo.deltas, w);
        read(s, "threads", c.montecarlo.threads, w);
    });
    section("verify", {"draws", "gd_steps", "sgd_cap"}, [&](const auto& s, const auto& w) {
        read(s, "draws", c.verify.draws, w);
        read(s, "gd_steps", c.verify.gd_steps, w);
        read(s, "sgd_cap", c.verify.sgd_cap, w);
    });
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

inline void save_config(const std::string& path, const ExperimentConfig& c) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << to_json(c).dump(2) << '\n';
    if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace sepgd::cli
