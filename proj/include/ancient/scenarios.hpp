#pragma once

// Declarative experiment documents: strict JSON loading, validation and
// execution with atomic per-case outputs.

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ancient/analysis.hpp"
#include "ancient/bundle_ode.hpp"
#include "ancient/errors.hpp"
#include "ancient/fateev.hpp"
#include "ancient/geometry_oracle.hpp"
#include "ancient/io.hpp"

namespace ancient::scenario {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kGenerator = "ancient-flow 1.0";

// ---------------------------------------------------------------------------
// Types

struct Tolerances {
    double residual = 1e-5;      // Fateev and Ω-family flow residuals
    double deviation = 1e-6;     // cigar and collapse limit studies
    double decay_factor = 10.0;  // Hamilton rescale: required drop between the last two ν
    double rel_tol = 1e-11;
    double abs_tol = 1e-14;
    double drift_bound = 1e-6;
};

struct FateevVerify {
    double nu = 1.0;
    double k = 0.0;
    std::vector<double> tau_grid{0.5, 1.0, 2.0, 5.0};
    std::vector<double> theta_grid{0.2, 0.7, 1.2, 1.5};
};

struct BundleFlow {
    std::string preset;  // empty when given explicitly
    bundle::FibrationParams params;
    double a0 = 1.0, b0 = 1.0;
    double tau_start = 1.0;
    double tau_max = 1e6;
    double backward_span = 1e6;
    std::string expect_branch;  // optional
};

struct SpectrumScan {
    int m = 1;
    double p = 4.0, q = 1.0;
    std::vector<double> ratios;
};

struct LimitStudy {
    std::string study;  // cigar | omega | hamilton | collapse
    double nu = 1.0;
    double k = 0.0;
    double xi = 20.0;
    double omega = 2.0;
    double tau = 1.0;
    std::vector<double> grid;  // y (cigar), ν (hamilton), τ (omega), θ (collapse)
    std::vector<double> theta_grid{0.2, 0.7, 1.2};
};

using Target = std::variant<FateevVerify, BundleFlow, SpectrumScan, LimitStudy>;

struct Output {
    std::string path;  // relative paths resolve against the run directory
    std::string format = "csv";
};

struct Scenario {
    std::string name;
    Target target;
    Tolerances tolerances;
    Output output;
};

struct Batch {
    std::string name;
    int workers = 1;
    std::vector<Scenario> scenarios;
};

inline std::string kind_name(const Target& t) {
    switch (t.index()) {
    case 0: return "fateev_verify";
    case 1: return "bundle_flow";
    case 2: return "spectrum_scan";
    default: return "limit_study";
    }
}

// ---------------------------------------------------------------------------
// Grids and explicit parameter strings

/// "start:stop:step", inclusive of stop up to rounding.
inline std::vector<double> parse_range(const std::string& spec) {
    double a, b, h;
    char c1, c2;
    std::istringstream is(spec);
    if (!(is >> a >> c1 >> b >> c2 >> h) || c1 != ':' || c2 != ':' || !(is >> std::ws).eof())
        throw ValidationError("range '" + spec + "' must be start:stop:step");
    if (!(h > 0) || !(b >= a)) throw ValidationError("range '" + spec + "' needs step > 0 and stop >= start");
    const long n = std::lround(std::floor((b - a) / h + 1e-9));
    if (n > 1'000'000) throw ValidationError("range '" + spec + "' has too many points");
    std::vector<double> out;
    char buf[32];
    for (long i = 0; i <= n; ++i) {
        // Snap to 15 significant digits: 0:1:0.1 gives 0.3 exactly as written.
        std::snprintf(buf, sizeof buf, "%.15g", a + static_cast<double>(i) * h);
        out.push_back(std::strtod(buf, nullptr));
    }
    return out;
}

/// Comma-separated list of numbers.
inline std::vector<double> parse_list(const std::string& spec) {
    std::vector<double> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            throw ValidationError("'" + item + "' is not a number");
        }
        if (used != item.size()) throw ValidationError("'" + item + "' is not a number");
        out.push_back(v);
    }
    if (out.empty()) throw ValidationError("empty list");
    return out;
}

/// params := variant ':' key '=' number { ',' key '=' number }
/// variant := 'u1' | 'su2' | 'submersion'
inline bundle::FibrationParams parse_params_spec(const std::string& spec) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw ValidationError("params '" + spec + "' must be variant:key=value,...");
    std::string variant = spec.substr(0, colon);
    std::transform(variant.begin(), variant.end(), variant.begin(), ::tolower);
    std::map<std::string, double> kv;
    std::stringstream ss(spec.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ValidationError("params entry '" + item + "' must be key=value");
        const std::string key = item.substr(0, eq);
        if (kv.count(key)) throw ValidationError("duplicate params key '" + key + "'");
        kv[key] = parse_list(item.substr(eq + 1)).at(0);
    }
    const auto need = [&](std::initializer_list<const char*> keys) {
        std::set<std::string> allowed(keys.begin(), keys.end());
        for (const auto& [k, v] : kv)
            if (!allowed.count(k)) throw ValidationError("unknown params key '" + k + "' for " + variant);
        for (const char* k : keys)
            if (!kv.count(k)) throw ValidationError("params for " + variant + " need '" + k + "'");
    };
    try {
        if (variant == "u1") {
            need({"m", "p", "q"});
            return bundle::make_u1(static_cast<int>(kv["m"]), kv["p"], kv["q"]);
        }
        if (variant == "su2") {
            need({"m", "p", "q"});
            return bundle::make_su2(static_cast<int>(kv["m"]), kv["p"], kv["q"]);
        }
        if (variant == "submersion") {
            need({"lambda", "lambda_hat", "lambda_check"});
            return bundle::make_submersion(kv["lambda"], kv["lambda_hat"], kv["lambda_check"]);
        }
    } catch (const InvalidParams& e) {
        throw ValidationError(e.what());
    } catch (const ComplexRoots& e) {
        throw ValidationError(e.what());
    }
    throw ValidationError("unknown variant '" + variant + "' (u1, su2, submersion)");
}

/// Default grids for each limit study.
inline LimitStudy limit_defaults(const std::string& study) {
    LimitStudy l;
    l.study = study;
    if (study == "cigar") {
        l.xi = 20.0;
        l.grid = parse_range("-2:2:0.1");
    } else if (study == "omega") {
        l.grid = {0.5, 1.0, 2.0, 5.0};
    } else if (study == "hamilton") {
        l.k = 0.5;
        l.grid = {1e-1, 1e-2, 1e-3, 1e-4};
    } else if (study == "collapse") {
        l.k = 0.5;
        l.xi = 25.0;
        l.grid = l.theta_grid;
    } else {
        throw ValidationError("limit study must be cigar, omega, hamilton or collapse, got '" + study + "'");
    }
    return l;
}

inline void validate(const LimitStudy& l) {
    const auto require = [](bool ok, const char* what) {
        if (!ok) throw ValidationError(what);
    };
    try {
        fateev::FateevParams::make(l.nu, l.k);
    } catch (const InvalidParams& e) {
        throw ValidationError(e.what());
    }
    require(l.omega > 0, "omega must be positive");
    require(l.xi > 0, "xi must be positive");
    for (double t : l.theta_grid) require(t > 0 && t < kPi / 2, "theta_grid entries must lie in (0, pi/2)");
    if (l.study == "collapse")
        for (double t : l.grid) require(t > 0 && t < kPi / 2, "theta grid entries must lie in (0, pi/2)");
    if (l.study == "omega")
        for (double t : l.grid) require(t > 0, "tau grid entries must be positive");
    if (l.study == "hamilton") {
        require(l.grid.size() >= 2, "hamilton study needs at least two nu values");
        for (double v : l.grid) require(v > 0, "nu grid entries must be positive");
    }
}

// ---------------------------------------------------------------------------
// Strict JSON reading

namespace detail {

inline std::size_t line_of(const std::string& text, std::size_t byte) {
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

class Reader {
public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ValidationError(where_ + " must be an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [k, v] : j_.items())
            if (!ok.count(k)) throw ValidationError("unknown field '" + path(k) + "'");
    }

    bool has(const char* key) const { return j_.contains(key); }
    const json& raw(const char* key) const { return j_.at(key); }
    std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

    double number(const char* key) const {
        if (!has(key)) throw ValidationError("missing required field '" + path(key) + "'");
        const json& v = j_.at(key);
        if (!v.is_number()) throw ValidationError("field '" + path(key) + "' must be a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ValidationError("field '" + path(key) + "' must be finite");
        return x;
    }
    double number(const char* key, double dflt) const { return has(key) ? number(key) : dflt; }

    int integer(const char* key) const {
        if (!has(key)) throw ValidationError("missing required field '" + path(key) + "'");
        const json& v = j_.at(key);
        if (!v.is_number_integer()) throw ValidationError("field '" + path(key) + "' must be an integer");
        return v.get<int>();
    }
    int integer(const char* key, int dflt) const { return has(key) ? integer(key) : dflt; }

    std::string string(const char* key) const {
        if (!has(key)) throw ValidationError("missing required field '" + path(key) + "'");
        const json& v = j_.at(key);
        if (!v.is_string()) throw ValidationError("field '" + path(key) + "' must be a string");
        return v.get<std::string>();
    }
    std::string string(const char* key, const std::string& dflt) const { return has(key) ? string(key) : dflt; }

    /// Array of numbers, or "start:stop:step".
    std::vector<double> grid(const char* key, const std::vector<double>& dflt) const {
        if (!has(key)) return dflt;
        const json& v = j_.at(key);
        std::vector<double> out;
        if (v.is_string()) {
            out = parse_range(v.get<std::string>());
        } else if (v.is_array()) {
            for (const auto& x : v) {
                if (!x.is_number()) throw ValidationError("field '" + path(key) + "' must contain numbers");
                out.push_back(x.get<double>());
            }
        } else {
            throw ValidationError("field '" + path(key) + "' must be an array or a start:stop:step string");
        }
        if (out.empty()) throw ValidationError("grid '" + path(key) + "' is empty");
        return out;
    }

    Reader child(const char* key) const { return Reader(j_.at(key), path(key)); }

private:
    const json& j_;
    std::string where_;
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
}

inline Tolerances read_tolerances(const Reader& r) {
    Tolerances t;
    r.allow({"residual", "deviation", "decay_factor", "rel_tol", "abs_tol", "drift_bound"});
    t.residual = r.number("residual", t.residual);
    t.deviation = r.number("deviation", t.deviation);
    t.decay_factor = r.number("decay_factor", t.decay_factor);
    t.rel_tol = r.number("rel_tol", t.rel_tol);
    t.abs_tol = r.number("abs_tol", t.abs_tol);
    t.drift_bound = r.number("drift_bound", t.drift_bound);
    for (double x : {t.residual, t.deviation, t.decay_factor, t.rel_tol, t.abs_tol, t.drift_bound})
        require(x > 0, "tolerances must be positive");
    return t;
}

inline bundle::FibrationParams read_system(const Reader& r) {
    const std::string v = r.string("variant");
    try {
        if (v == "U1" || v == "SU2") {
            r.allow({"variant", "m", "p", "q"});
            const int m = r.integer("m");
            return v == "U1" ? bundle::FibrationParams{bundle::make_u1(m, r.number("p"), r.number("q"))}
                             : bundle::FibrationParams{bundle::make_su2(m, r.number("p"), r.number("q"))};
        }
        if (v == "Submersion") {
            r.allow({"variant", "lambda", "lambda_hat", "lambda_check"});
            return bundle::make_submersion(r.number("lambda"), r.number("lambda_hat"), r.number("lambda_check"));
        }
    } catch (const InvalidParams& e) {
        throw ValidationError(r.path("") + " " + e.what());
    } catch (const ComplexRoots& e) {
        throw ValidationError(r.path("") + " " + e.what());
    }
    throw ValidationError("field '" + r.path("variant") + "' must be U1, SU2 or Submersion");
}

inline Target read_target(const std::string& kind, const Reader& r) {
    if (kind == "fateev_verify") {
        r.allow({"nu", "k", "tau_grid", "theta_grid"});
        FateevVerify f;
        f.nu = r.number("nu");
        f.k = r.number("k");
        f.tau_grid = r.grid("tau_grid", f.tau_grid);
        f.theta_grid = r.grid("theta_grid", f.theta_grid);
        try {
            fateev::FateevParams::make(f.nu, f.k);
        } catch (const InvalidParams& e) {
            throw ValidationError(e.what());
        }
        for (double t : f.tau_grid) require(t > 0, "tau_grid entries must be positive");
        for (double t : f.theta_grid)
            require(t > 0 && t < kPi / 2, "theta_grid entries must lie in (0, pi/2)");
        return f;
    }
    if (kind == "bundle_flow") {
        r.allow({"preset", "system", "y0", "a0", "b0", "tau_start", "tau_max", "backward_span", "expect_branch"});
        BundleFlow b;
        require(r.has("preset") != r.has("system"), "bundle_flow needs exactly one of 'preset' or 'system'");
        if (r.has("preset")) {
            b.preset = r.string("preset");
            try {
                b.params = bundle::preset(b.preset);
            } catch (const UnknownPreset& e) {
                throw ValidationError(std::string("field 'params.preset': ") + e.what());
            } catch (const InvalidParams& e) {
                throw ValidationError(std::string("field 'params.preset': ") + e.what());
            }
        } else {
            b.params = read_system(r.child("system"));
        }
        b.b0 = r.number("b0", 1.0);
        require(r.has("y0") != r.has("a0"), "bundle_flow needs exactly one of 'y0' or 'a0'");
        b.a0 = r.has("y0") ? r.number("y0") * b.b0 : r.number("a0");
        require(b.a0 > 0 && b.b0 > 0, "initial state must have a0 > 0 and b0 > 0");
        b.tau_start = r.number("tau_start", b.tau_start);
        b.tau_max = r.number("tau_max", b.tau_max);
        b.backward_span = r.number("backward_span", b.backward_span);
        require(b.tau_max > b.tau_start, "tau_max must exceed tau_start");
        require(b.backward_span > 0, "backward_span must be positive");
        b.expect_branch = r.string("expect_branch", "");
        if (!b.expect_branch.empty()) {
            const std::set<std::string> ok{"ray", "connector", "fiber-collapse", "base-collapse", "collapsed"};
            require(ok.count(b.expect_branch) > 0, "expect_branch must be one of ray, connector, "
                                                   "fiber-collapse, base-collapse, collapsed");
        }
        return b;
    }
    if (kind == "spectrum_scan") {
        r.allow({"m", "p", "q", "ratios"});
        SpectrumScan s;
        s.m = r.integer("m");
        s.p = r.number("p");
        s.q = r.number("q");
        require(s.m >= 1, "spectrum_scan needs m >= 1");
        require(s.p > 0 && s.q != 0, "spectrum_scan needs p > 0 and q != 0");
        s.ratios = r.grid("ratios", parse_range("0:6:0.1"));
        for (double y : s.ratios) require(y >= 0, "ratios must be non-negative");
        return s;
    }
    if (kind == "limit_study") {
        r.allow({"study", "nu", "k", "xi", "omega", "tau", "grid", "theta_grid"});
        LimitStudy l = limit_defaults(r.string("study"));
        l.nu = r.number("nu", l.nu);
        l.k = r.number("k", l.k);
        l.xi = r.number("xi", l.xi);
        l.omega = r.number("omega", l.omega);
        l.tau = r.number("tau", l.tau);
        l.theta_grid = r.grid("theta_grid", l.theta_grid);
        if (l.study == "collapse" && !r.has("grid")) l.grid = l.theta_grid;
        l.grid = r.grid("grid", l.grid);
        validate(l);
        return l;
    }
    throw ValidationError("field 'kind' must be fateev_verify, bundle_flow, spectrum_scan or limit_study");
}

inline Scenario read_scenario(const Reader& r, bool top_level) {
    if (top_level)
        r.allow({"schema_version", "name", "kind", "params", "tolerances", "output"});
    else
        r.allow({"name", "kind", "params", "tolerances", "output"});
    Scenario s;
    s.name = r.string("name");
    require(!s.name.empty() && s.name.find_first_of("/\\") == std::string::npos,
            "scenario name must be non-empty without path separators");
    const std::string kind = r.string("kind");
    s.target = read_target(kind, r.has("params") ? r.child("params") : Reader(json::object(), r.path("params")));
    if (r.has("tolerances")) s.tolerances = read_tolerances(r.child("tolerances"));
    if (r.has("output")) {
        const Reader o = r.child("output");
        o.allow({"path", "format"});
        s.output.format = o.string("format", "csv");
        s.output.path = o.string("path", "");
    }
    require(s.output.format == "csv" || s.output.format == "json", "output.format must be csv or json");
    if (s.output.path.empty()) s.output.path = s.name + "." + s.output.format;
    return s;
}

} // namespace detail

/// Parses a scenario or batch document. A single scenario becomes a batch
/// of one.
inline Batch parse_document(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t line = detail::line_of(text, e.byte > 0 ? e.byte - 1 : 0);
        throw ParseError("line " + std::to_string(line) + ": " + e.what(), line);
    }
    const detail::Reader r(j, "");
    if (!r.has("schema_version")) throw ValidationError("missing required field 'schema_version'");
    if (!(j["schema_version"].is_number_integer() && j["schema_version"].get<int>() == kSchemaVersion))
        throw ValidationError("field 'schema_version' must be 1");

    Batch b;
    if (r.has("scenarios")) {
        r.allow({"schema_version", "name", "workers", "scenarios"});
        b.name = r.string("name", "batch");
        b.workers = r.integer("workers", 1);
        detail::require(b.workers >= 1, "workers must be >= 1");
        const json& arr = j["scenarios"];
        if (!arr.is_array() || arr.empty()) throw ValidationError("field 'scenarios' must be a non-empty array");
        std::set<std::string> names;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            b.scenarios.push_back(detail::read_scenario(detail::Reader(arr[i], "scenarios[" + std::to_string(i) + "]"), false));
            if (!names.insert(b.scenarios.back().name).second)
                throw ValidationError("duplicate scenario name '" + b.scenarios.back().name + "'");
        }
    } else {
        b.scenarios.push_back(detail::read_scenario(r, true));
        b.name = b.scenarios.back().name;
    }
    return b;
}

inline Batch load_scenario(const std::filesystem::path& path) { return parse_document(io::read_file(path)); }

// ---------------------------------------------------------------------------
// Execution

struct CaseResult {
    std::string name;
    std::string kind;
    bool pass = false;
    std::vector<analysis::Check> checks;
    std::vector<std::string> outputs;
    std::string error;
    std::string summary;
    double wall_seconds = 0;
};

inline json to_json(const CaseResult& c) {
    json checks = json::array();
    for (const auto& k : c.checks) checks.push_back({{"name", k.name}, {"pass", k.pass}, {"detail", k.detail}});
    return {{"name", c.name},           {"kind", c.kind},       {"pass", c.pass},
            {"checks", checks},         {"outputs", c.outputs}, {"error", c.error.empty() ? json(nullptr) : json(c.error)},
            {"summary", c.summary}};
}

namespace detail {

/// Table held as column names plus string rows, rendered as CSV or JSON.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::vector<json>> values;

    void add(std::vector<json> row) {
        std::vector<std::string> text;
        for (const auto& v : row)
            text.push_back(v.is_number() ? io::fmt_double(v.get<double>())
                                         : v.is_string() ? v.get<std::string>() : v.is_boolean() ? (v.get<bool>() ? "true" : "false") : "");
        rows.push_back(std::move(text));
        values.push_back(std::move(row));
    }

    std::string csv() const {
        std::string out = io::csv_row(columns);
        for (const auto& r : rows) out += io::csv_row(r);
        return out;
    }

    json as_json() const {
        json arr = json::array();
        for (const auto& r : values) {
            json o = json::object();
            for (std::size_t i = 0; i < columns.size(); ++i) o[columns[i]] = r[i];
            arr.push_back(o);
        }
        return arr;
    }
};

inline std::string render(const Table& t, const std::string& format, const json& extra = nullptr) {
    if (format == "csv") return t.csv();
    json j = {{"rows", t.as_json()}};
    if (!extra.is_null()) j.update(extra);
    return j.dump(2) + "\n";
}

inline std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline analysis::Check check(std::string name, bool pass, std::string detail) {
    return {std::move(name), pass, std::move(detail)};
}

inline std::string sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", x);
    return buf;
}

} // namespace detail

/// Residual table of the Fateev family on the τ × θ grid: closed-form Ricci
/// and oracle Ricci against the central-difference time derivative.
inline detail::Table fateev_residual_table(const FateevVerify& f, double& worst) {
    const auto p = fateev::FateevParams::make(f.nu, f.k);
    const auto family = fateev::chart_metric(p);
    detail::Table t;
    t.columns = {"nu", "k", "tau", "theta", "residual", "oracle_residual"};
    worst = 0;
    for (double tau : f.tau_grid)
        for (double th : f.theta_grid) {
            const double res = fateev::closed_flow_residual(p, tau, th);
            const double orc = oracle::flow_residual(family, tau, Vec3{th, 0.0, 0.0});
            worst = std::max({worst, res, orc});
            t.add({f.nu, f.k, tau, th, res, orc});
        }
    return t;
}

/// Max deviation of the generic profile from the explicit k = 0 form.
inline double k0_specialization_error(double nu, const std::vector<double>& taus,
                                      const std::vector<double>& thetas) {
    const auto p = fateev::FateevParams::make(nu, 0.0);
    double worst = 0;
    for (double tau : taus)
        for (double th : thetas) {
            const double xi = fateev::tau_to_xi(p, tau);
            const auto g = fateev::metric_coeffs(fateev::profile(p, xi), th);
            const auto e = fateev::k0_explicit(nu, xi, th);
            for (auto [x, y] : {std::pair{g.A, e.A}, {g.B, e.B}, {g.C, e.C}, {g.D, e.D}})
                worst = std::max(worst, std::fabs(x - y) / (1.0 + std::fabs(y)));
        }
    return worst;
}

struct SpectrumRow {
    double ratio;
    CurvatureSpectrum spectrum;
};

inline std::vector<SpectrumRow> spectrum_rows(const SpectrumScan& s) {
    std::vector<SpectrumRow> rows;
    for (double y : s.ratios) rows.push_back({y, bundle::curvature_spectrum_u1_cpm(s.m, s.p, s.q, y, 1.0)});
    return rows;
}

inline std::string sign_marker(double v) { return v > 0 ? "POSITIVE" : v < 0 ? "NEGATIVE" : "ZERO"; }

/// One row per occurring eigenvalue; `sign` marks each eigenvalue.
inline detail::Table spectrum_table(const std::vector<SpectrumRow>& rows) {
    detail::Table t;
    t.columns = {"ratio", "label", "value", "multiplicity", "sign"};
    for (const auto& r : rows)
        for (const auto& e : r.spectrum.entries)
            if (e.multiplicity > 0) t.add({r.ratio, e.label, e.value, e.multiplicity, sign_marker(e.value)});
    return t;
}

/// Bracket between consecutive grid ratios where the smallest eigenvalue
/// goes from strictly positive to strictly negative or back. Ratios where it
/// vanishes exactly are skipped.
inline std::optional<std::pair<double, double>> sign_change(const std::vector<SpectrumRow>& rows) {
    std::optional<std::size_t> last;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double v = rows[i].spectrum.min_value();
        if (v == 0.0) continue;
        if (last && (rows[*last].spectrum.min_value() > 0) != (v > 0))
            return std::make_pair(rows[*last].ratio, rows[i].ratio);
        last = i;
    }
    return std::nullopt;
}

/// Limit-study deviation table and the checks attached to it.
inline detail::Table limit_table(const LimitStudy& l, const Tolerances& tol, std::vector<analysis::Check>& checks) {
    detail::Table t;
    if (l.study == "cigar") {
        t.columns = {"y", "g_yy", "g_chi1", "g_chi2", "g_cross", "deviation"};
        double worst = 0;
        for (double y : l.grid) {
            const auto s = fateev::cigar_limit_coeffs(l.nu, l.xi, y);
            worst = std::max(worst, s.max_deviation());
            t.add({y, s.g_yy, s.g_chi1, s.g_chi2, s.g_cross, s.max_deviation()});
        }
        checks.push_back(detail::check("cigar deviation", worst <= tol.deviation,
                                       "max " + detail::sci(worst) + " at xi = " + io::fmt_double(l.xi)));
    } else if (l.study == "omega") {
        t.columns = {"omega", "tau", "theta", "residual"};
        const auto family = fateev::omega_chart_metric(l.omega);
        double worst = 0;
        for (double tau : l.grid)
            for (double th : l.theta_grid) {
                const double r = oracle::flow_residual(family, tau, Vec3{th, 0.0, 0.0});
                worst = std::max(worst, r);
                t.add({l.omega, tau, th, r});
            }
        checks.push_back(detail::check("omega-family flow residual", worst <= tol.residual, "max " + detail::sci(worst)));
    } else if (l.study == "hamilton") {
        t.columns = {"k", "nu", "tau", "deviation"};
        std::vector<double> devs;
        for (double nu : l.grid) {
            double worst = 0;
            for (double th : l.theta_grid) worst = std::max(worst, fateev::hamilton_rescale_check(l.k, nu, l.tau, th));
            devs.push_back(worst);
            t.add({l.k, nu, l.tau, worst});
        }
        const double d1 = devs[devs.size() - 2], d2 = devs.back();
        checks.push_back(detail::check("hamilton rescale decay", d2 * tol.decay_factor <= d1,
                                       "deviation " + detail::sci(d1) + " -> " + detail::sci(d2)));
    } else {
        t.columns = {"nu", "k", "xi", "theta", "deviation"};
        const auto p = fateev::FateevParams::make(l.nu, l.k);
        double worst = 0;
        for (double th : l.grid) {
            const double d = fateev::collapse_limit_deviation(p, l.xi, th);
            worst = std::max(worst, d);
            t.add({l.nu, l.k, l.xi, th, d});
        }
        checks.push_back(detail::check("collapse-limit deviation", worst <= tol.deviation,
                                       "max " + detail::sci(worst) + " at xi = " + io::fmt_double(l.xi)));
    }
    return t;
}

/// Runs one scenario, writing its outputs under `out_dir`. Errors inside the
/// pipeline are recorded in the result rather than thrown.
inline CaseResult run_scenario(const Scenario& s, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    CaseResult c;
    c.name = s.name;
    c.kind = kind_name(s.target);
    const auto started = detail::utc_now();
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path data_path = fs::path(s.output.path).is_absolute() ? fs::path(s.output.path) : out_dir / s.output.path;
    const auto emit = [&](const fs::path& path, const std::string& content) {
        io::atomic_write(path, content);
        c.outputs.push_back(path.string());
    };

    try {
        if (const auto* f = std::get_if<FateevVerify>(&s.target)) {
            double worst = 0;
            const auto table = fateev_residual_table(*f, worst);
            c.checks.push_back(detail::check("flow residual", worst <= s.tolerances.residual,
                                             "max " + detail::sci(worst) + " <= " + detail::sci(s.tolerances.residual)));
            if (f->k == 0.0) {
                const double e = k0_specialization_error(f->nu, f->tau_grid, f->theta_grid);
                c.checks.push_back(detail::check("k = 0 explicit form", e <= 1e-12, "max " + detail::sci(e)));
            }
            emit(data_path, detail::render(table, s.output.format, {{"max_residual", worst}}));
            c.summary = "max residual " + detail::sci(worst);
        } else if (const auto* b = std::get_if<BundleFlow>(&s.target)) {
            analysis::TwoSidedOptions o;
            o.tau_start = b->tau_start;
            o.tau_max = b->tau_max;
            o.backward_span = b->backward_span;
            o.integrator.rel_tol = s.tolerances.rel_tol;
            o.integrator.abs_tol = s.tolerances.abs_tol;
            o.integrator.drift_bound = s.tolerances.drift_bound;
            analysis::TwoSided run;
            const auto rep = analysis::flow_report(b->params, {b->tau_start, b->a0, b->b0}, o, b->preset, &run);
            c.checks = rep.checks;
            if (!b->expect_branch.empty())
                c.checks.push_back(detail::check("branch", analysis::to_string(rep.branch) == b->expect_branch,
                                                 analysis::to_string(rep.branch)));
            std::vector<flow::Event> events = run.backward.events;
            events.insert(events.end(), run.forward.events.begin(), run.forward.events.end());
            const std::string traj = io::trajectory_csv(b->params, run.samples(), events);
            if (s.output.format == "csv") {
                emit(data_path, traj);
            } else {
                json rows = json::array();
                for (const auto& st : run.samples()) rows.push_back({st.tau, st.a, st.b});
                emit(data_path, json({{"columns", {"tau", "a", "b"}}, {"rows", rows}}).dump(2) + "\n");
            }
            fs::path report_path = data_path;
            report_path.replace_extension(".report.json");
            emit(report_path, analysis::to_json(rep).dump(2) + "\n");
            c.summary = rep.summary();
        } else if (const auto* sp = std::get_if<SpectrumScan>(&s.target)) {
            const auto rows = spectrum_rows(*sp);
            const auto t = spectrum_table(rows);
            const double thr = bundle::u1_positivity_threshold(sp->m, sp->p, sp->q);
            const auto br = sign_change(rows);
            const bool in_range = thr >= sp->ratios.front() && thr <= sp->ratios.back();
            if (in_range)
                c.checks.push_back(detail::check(
                    "sign change brackets threshold",
                    br && br->first <= thr && thr <= br->second,
                    br ? "bracket [" + io::fmt_double(br->first) + ", " + io::fmt_double(br->second) + "], threshold " + io::fmt_double(thr)
                       : "no sign change on the grid"));
            else
                c.checks.push_back(detail::check("no sign change off threshold", !br, "threshold " + io::fmt_double(thr) + " outside grid"));
            emit(data_path, detail::render(t, s.output.format, {{"threshold", thr}}));
            c.summary = br ? "sign change in [" + io::fmt_double(br->first) + ", " + io::fmt_double(br->second) + "]" : "no sign change";
        } else {
            const auto& l = std::get<LimitStudy>(s.target);
            const auto t = limit_table(l, s.tolerances, c.checks);
            emit(data_path, detail::render(t, s.output.format));
            c.summary = l.study + ": " + c.checks.back().detail;
        }
        c.pass = std::all_of(c.checks.begin(), c.checks.end(), [](const auto& k) { return k.pass; });
    } catch (const std::exception& e) {
        c.error = e.what();
        c.pass = false;
        c.summary = "error: " + c.error;
    }
    c.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // Run metadata lives beside the data so data files stay bit-reproducible.
    try {
        const json meta = {{"scenario", s.name},       {"kind", c.kind},         {"generator", kGenerator},
                           {"started_utc", started},   {"wall_seconds", c.wall_seconds},
                           {"pass", c.pass},           {"outputs", c.outputs}};
        io::atomic_write(data_path.string() + ".meta.json", meta.dump(2) + "\n");
    } catch (const IoError& e) {
        if (c.error.empty()) c.error = e.what();
        c.pass = false;
    }
    return c;
}

/// Runs every case with up to `workers` threads; results keep batch order.
inline std::vector<CaseResult> run_batch(const Batch& b, const std::filesystem::path& out_dir, int workers = 0) {
    const int n = static_cast<int>(b.scenarios.size());
    const int w = std::max(1, std::min(workers > 0 ? workers : b.workers, n));
    std::vector<CaseResult> results(n);
    std::atomic<int> next{0};
    const auto work = [&] {
        for (int i; (i = next++) < n;) results[i] = run_scenario(b.scenarios[i], out_dir);
    };
    std::vector<std::thread> pool;
    for (int i = 1; i < w; ++i) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    return results;
}

} // namespace ancient::scenario
