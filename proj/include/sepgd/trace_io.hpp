#pragma once

#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sepgd/data_gen.hpp"
#include "sepgd/montecarlo.hpp"
#include "sepgd/optimizers.hpp"
#include "sepgd/schedule.hpp"

namespace sepgd {

inline constexpr std::string_view kTraceHeader = "t,loss,eta,S,grad_norm,w_norm";
inline constexpr std::string_view kScheduleHeader = "t,eta,S,lnS,branch";
inline constexpr std::string_view kHittingHeader = "seed,tau,censored,epsilon,bound";

namespace detail {

inline void put_optional(std::ostream& out, const std::optional<double>& v) {
    if (v) out << *v;
}

inline std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        fields.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return fields;
}

inline std::optional<double> parse_optional(std::string_view f, std::size_t line, std::size_t col) {
    if (trim(f).empty()) return std::nullopt;
    return parse_double(f, line, col);
}

inline std::uint64_t parse_uint(std::string_view f, std::size_t line, std::size_t col) {
    f = trim(f);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || ptr != f.data() + f.size() || f.empty())
        throw ParseError(line, "column " + std::to_string(col) + ": '" + std::string(f) +
                                   "' is not a non-negative integer");
    return v;
}

template <class RowFn>
void read_rows(std::istream& in, std::string_view header, std::size_t columns, RowFn&& fn) {
    std::string line;
    if (!std::getline(in, line) || trim(line) != header)
        throw ParseError(1, "expected header '" + std::string(header) + "'");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(trim(line));
        if (fields.size() != columns)
            throw ParseError(line_no, "expected " + std::to_string(columns) + " fields, got " +
                                          std::to_string(fields.size()));
        fn(fields, line_no);
    }
}

}  // namespace detail

/// `t,loss,eta,S,grad_norm,w_norm`; optional fields are written empty.
inline void write_trace_csv(std::ostream& out, const RunTrace& trace) {
    out << kTraceHeader << '\n' << std::setprecision(17);
    for (const auto& r : trace.records) {
        out << r.t << ',' << r.loss << ',';
        detail::put_optional(out, r.eta);
        out << ',';
        detail::put_optional(out, r.S);
        out << ',';
        detail::put_optional(out, r.grad_norm);
        out << ',' << r.w_norm << '\n';
    }
}

inline std::vector<TraceRecord> read_trace_csv(std::istream& in) {
    std::vector<TraceRecord> rows;
    detail::read_rows(in, kTraceHeader, 6, [&](const auto& f, std::size_t ln) {
        TraceRecord r;
        r.t = detail::parse_uint(f[0], ln, 1);
        r.loss = detail::parse_double(f[1], ln, 2);
        r.eta = detail::parse_optional(f[2], ln, 3);
        r.S = detail::parse_optional(f[3], ln, 4);
        r.grad_norm = detail::parse_optional(f[4], ln, 5);
        r.w_norm = detail::parse_double(f[5], ln, 6);
        rows.push_back(r);
    });
    return rows;
}

struct ScheduleRow {
    std::size_t t = 0;
    double eta = 0.0;
    double S = 0.0;
    double lnS = 0.0;
    Branch branch = Branch::exp_loss;
    friend bool operator==(const ScheduleRow&, const ScheduleRow&) = default;
};

inline ScheduleRow schedule_row(const ScheduleState& s) { return {s.t, s.eta, s.S, s.log_S(), s.branch}; }

/// `t,eta,S,lnS,branch` with branch 0 when 2F(w0) is the active term of the max
/// and 1 when ln^2(S) is. Row t reports the branch that produced eta_t; row 0
/// reports the regime S_0 starts in.
inline void write_schedule_csv(std::ostream& out, const std::vector<ScheduleRow>& rows) {
    out << kScheduleHeader << '\n' << std::setprecision(17);
    for (const auto& r : rows)
        out << r.t << ',' << r.eta << ',' << r.S << ',' << r.lnS << ',' << static_cast<int>(r.branch) << '\n';
}

inline std::vector<ScheduleRow> read_schedule_csv(std::istream& in) {
    std::vector<ScheduleRow> rows;
    detail::read_rows(in, kScheduleHeader, 5, [&](const auto& f, std::size_t ln) {
        ScheduleRow r;
        r.t = detail::parse_uint(f[0], ln, 1);
        r.eta = detail::parse_double(f[1], ln, 2);
        r.S = detail::parse_double(f[2], ln, 3);
        r.lnS = detail::parse_double(f[3], ln, 4);
        const auto b = detail::parse_uint(f[4], ln, 5);
        if (b > 1) throw ParseError(ln, "branch must be 0 or 1");
        r.branch = static_cast<Branch>(b);
        rows.push_back(r);
    });
    return rows;
}

/// `seed,tau,censored,epsilon,bound`; tau is empty for censored runs.
inline void write_hitting_csv(std::ostream& out, const HittingStats& stats) {
    out << kHittingHeader << '\n' << std::setprecision(17);
    for (const auto& r : stats.taus) {
        out << r.seed << ',';
        if (r.tau) out << *r.tau;
        out << ',' << (r.censored() ? 1 : 0) << ',' << stats.epsilon << ',' << stats.bound_expectation << '\n';
    }
}

/// Reads hitting records back. `n`, `gamma` and per-record caps are not part of
/// the file and are left at their defaults.
inline HittingStats read_hitting_csv(std::istream& in) {
    HittingStats stats;
    detail::read_rows(in, kHittingHeader, 5, [&](const auto& f, std::size_t ln) {
        HittingRecord r;
        r.seed = detail::parse_uint(f[0], ln, 1);
        const bool censored = detail::parse_uint(f[2], ln, 3) != 0;
        if (!censored) r.tau = detail::parse_uint(f[1], ln, 2);
        stats.epsilon = detail::parse_double(f[3], ln, 4);
        stats.bound_expectation = detail::parse_double(f[4], ln, 5);
        stats.taus.push_back(r);
    });
    return stats;
}

// --------------------------------------------------------------------------
// Certificate sidecar: {"gamma": ..., "direction": [...]}

inline nlohmann::json certificate_to_json(const MarginCertificate& cert) {
    return nlohmann::json{{"gamma", cert.margin}, {"direction", cert.direction}};
}

inline MarginCertificate certificate_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("gamma") || !j.contains("direction"))
        throw ConfigError("certificate: expected an object with 'gamma' and 'direction'");
    for (const auto& [key, _] : j.items())
        if (key != "gamma" && key != "direction") throw ConfigError("certificate: unknown key '" + key + "'");
    MarginCertificate cert;
    cert.margin = j.at("gamma").get<double>();
    cert.direction = j.at("direction").get<Vector>();
    cert.validate();
    return cert;
}

inline void save_certificate(const std::string& path, const MarginCertificate& cert) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << certificate_to_json(cert).dump(2) << '\n';
    if (!out) throw IoError("write to '" + path + "' failed");
}

inline MarginCertificate load_certificate(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("certificate '" + path + "': " + e.what());
    }
    return certificate_from_json(j);
}

}  // namespace sepgd
