#pragma once

// Deterministic number formatting, CSV rows and atomic file writes.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "ancient/bundle_ode.hpp"
#include "ancient/errors.hpp"
#include "ancient/flow_integrator.hpp"

namespace ancient::io {

/// Shortest %.Ng (N <= 17) that parses back to the same double.
inline std::string fmt_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

/// One CSV record (RFC 4180 quoting, LF terminated).
inline std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\n") != std::string::npos) {
            out += '"';
            for (char c : f) out += c == '"' ? std::string("\"\"") : std::string(1, c);
            out += '"';
        } else {
            out += f;
        }
    }
    return out + '\n';
}

/// Writes through a temporary in the same directory and renames it into
/// place, so readers never observe a partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
        f << content;
        f.flush();
        if (!f) {
            fs::remove(tmp, ec);
            throw IoError("write to " + tmp.string() + " failed");
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot rename into " + path.string());
    }
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path.string());
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

/// Trajectory table with columns tau, a, b, y, Lambda, event. Event rows
/// carry the located event state; other rows leave the column empty.
inline std::string trajectory_csv(const bundle::FibrationParams& fp,
                                  const std::vector<bundle::FlowState>& samples,
                                  const std::vector<flow::Event>& events) {
    struct Row {
        bundle::FlowState s;
        std::string event;
    };
    std::vector<Row> rows;
    rows.reserve(samples.size() + events.size());
    for (const auto& s : samples) rows.push_back({s, ""});
    for (const auto& e : events) rows.push_back({e.state, flow::to_string(e.kind)});
    std::stable_sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) { return x.s.tau < y.s.tau; });

    std::string out = csv_row({"tau", "a", "b", "y", "Lambda", "event"});
    for (const auto& r : rows) {
        const bool positive = r.s.a > 0 && r.s.b > 0;
        const std::string lam = positive ? fmt_double(bundle::first_integral(fp, r.s).value) : "";
        out += csv_row({fmt_double(r.s.tau), fmt_double(r.s.a), fmt_double(r.s.b), r.s.b != 0 ? fmt_double(r.s.y()) : "",
                        lam, r.event});
    }
    return out;
}

} // namespace ancient::io
