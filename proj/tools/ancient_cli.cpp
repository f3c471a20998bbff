// Command-line front end: verification, integration, spectra, presets,
// limit studies, scenario batches and report rendering.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ancient/analysis.hpp"
#include "ancient/bundle_ode.hpp"
#include "ancient/errors.hpp"
#include "ancient/fateev.hpp"
#include "ancient/io.hpp"
#include "ancient/scenarios.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ancient;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

struct Globals {
    std::string out;
    std::string format;
    int workers = 1;
    std::optional<double> tol;

    std::string format_or(const std::string& dflt) const { return format.empty() ? dflt : format; }
};

std::vector<double> parse_grid(const std::string& spec) {
    return spec.find(':') != std::string::npos ? scenario::parse_range(spec) : scenario::parse_list(spec);
}

/// Data goes to --out when given, otherwise to stdout.
void emit(const Globals& g, const std::string& content) {
    if (g.out.empty()) {
        std::cout << content;
    } else {
        io::atomic_write(g.out, content);
        std::cerr << "wrote " << g.out << "\n";
    }
}

std::string sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", x);
    return buf;
}

std::string safe_name(std::string s) {
    for (char& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    while (!s.empty() && s.back() == '_') s.pop_back();
    return s.empty() ? "flow" : s;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
    std::optional<double> nu, k;
    std::string tau_grid, theta_grid;
};

int cmd_verify(const Globals& g, const VerifyArgs& a) {
    const double tol = g.tol.value_or(1e-5);
    std::vector<std::pair<double, double>> cases;
    if (!a.nu && !a.k)
        cases = {{1.0, 0.0}, {1.0, 0.3}, {2.0, -0.5}, {0.5, 0.9}};
    else
        cases = {{a.nu.value_or(1.0), a.k.value_or(0.0)}};

    scenario::FateevVerify base;
    if (!a.tau_grid.empty()) base.tau_grid = parse_grid(a.tau_grid);
    if (!a.theta_grid.empty()) base.theta_grid = parse_grid(a.theta_grid);
    for (double t : base.tau_grid)
        if (!(t > 0)) throw ValidationError("tau grid entries must be positive");
    for (double t : base.theta_grid)
        if (!(t > 0 && t < kPi / 2)) throw ValidationError("theta grid entries must lie in (0, pi/2)");
    for (auto [nu, k] : cases) fateev::FateevParams::make(nu, k);

    scenario::detail::Table all;
    double worst = 0, k0_error = 0;
    bool k0_checked = false;
    for (auto [nu, k] : cases) {
        scenario::FateevVerify f = base;
        f.nu = nu;
        f.k = k;
        double w = 0;
        auto t = scenario::fateev_residual_table(f, w);
        worst = std::max(worst, w);
        all.columns = t.columns;
        for (auto& row : t.values) all.add(row);
        if (k == 0.0) {
            k0_checked = true;
            k0_error = std::max(k0_error, scenario::k0_specialization_error(nu, f.tau_grid, f.theta_grid));
        }
    }
    const bool pass = worst <= tol && (!k0_checked || k0_error <= 1e-12);
    json extra = {{"max_residual", worst}, {"tolerance", tol}, {"pass", pass}};
    if (k0_checked) extra["k0_explicit_error"] = k0_error;
    emit(g, scenario::detail::render(all, g.format_or("csv"), extra));

    std::string line = "max residual " + sci(worst) + " (tol " + sci(tol) + ")";
    if (k0_checked) line += ", k = 0 explicit form error " + sci(k0_error);
    std::cerr << line << (pass ? ": PASS" : ": FAIL") << "\n";
    return pass ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------

struct FlowArgs {
    std::string preset, params;
    std::optional<double> a0, y0;
    double b0 = 1.0;
    std::string tau_span;
    double backward_span = 1e6;
    bool backward = false;
};

int cmd_flow(const Globals& g, const FlowArgs& a) {
    if (a.preset.empty() == a.params.empty()) throw ValidationError("flow needs exactly one of --preset or --params");
    if (a.a0.has_value() == a.y0.has_value()) throw ValidationError("flow needs exactly one of --a0 or --y0");
    bundle::FibrationParams fp = a.preset.empty() ? scenario::parse_params_spec(a.params) : bundle::preset(a.preset);
    if (!(a.b0 > 0)) throw ValidationError("--b0 must be positive");
    const double a0 = a.a0 ? *a.a0 : *a.y0 * a.b0;
    if (!(a0 > 0)) throw ValidationError("initial state must have a0 > 0");

    analysis::TwoSidedOptions o;
    if (!a.tau_span.empty()) {
        const auto span = parse_grid(a.tau_span);
        if (span.size() == 1) {
            o.tau_max = span[0];
        } else if (span.size() == 2) {
            o.tau_start = span[0];
            o.tau_max = span[1];
        } else {
            throw ValidationError("--tau-span takes 'max' or 'start,max'");
        }
        if (!(o.tau_max > o.tau_start)) throw ValidationError("--tau-span end must exceed its start");
    }
    if (!(a.backward_span > 0)) throw ValidationError("--backward-span must be positive");
    o.backward_span = a.backward_span;
    if (g.tol) o.integrator.drift_bound = *g.tol;

    const std::string name = safe_name(a.preset.empty() ? a.params : a.preset);
    const fs::path dir = g.out.empty() ? fs::path("out") : fs::path(g.out);
    const bundle::FlowState init{o.tau_start, a0, a.b0};

    if (a.backward) {
        flow::IntegratorOptions opts = o.integrator;
        opts.t_start = o.tau_start;
        opts.t_end = o.tau_start - o.backward_span;
        const auto tr = flow::integrate(fp, init, opts);
        const fs::path csv = dir / (name + ".backward.csv");
        io::atomic_write(csv, io::trajectory_csv(fp, tr.samples, tr.events));
        std::cerr << "wrote " << csv.string() << "\n";
        json events = json::array();
        for (const auto& e : tr.events)
            events.push_back({{"kind", flow::to_string(e.kind)}, {"tau", e.tau}, {"a", e.state.a}, {"b", e.state.b}});
        if (g.format_or("text") == "json") {
            std::cout << json({{"events", events}, {"drift", tr.drift}, {"trajectory", csv.string()}}).dump(2) << "\n";
        } else {
            for (const auto& e : tr.events)
                std::cout << flow::to_string(e.kind) << " at tau=" << io::fmt_double(e.tau) << " a=" << io::fmt_double(e.state.a)
                          << " b=" << io::fmt_double(e.state.b) << "\n";
        }
        return tr.rejected ? kCheckFailed : kOk;
    }

    analysis::TwoSided run;
    const auto rep = analysis::flow_report(fp, init, o, a.preset, &run);
    std::vector<flow::Event> events = run.backward.events;
    events.insert(events.end(), run.forward.events.begin(), run.forward.events.end());
    const fs::path csv = dir / (name + ".trajectory.csv");
    const fs::path rjson = dir / (name + ".report.json");
    const json rj = analysis::to_json(rep);
    io::atomic_write(csv, io::trajectory_csv(fp, run.samples(), events));
    io::atomic_write(rjson, rj.dump(2) + "\n");
    std::cerr << "wrote " << csv.string() << " and " << rjson.string() << "\n";
    if (g.format_or("text") == "json")
        std::cout << rj.dump(2) << "\n";
    else
        std::cout << rep.summary() << "\n";
    return rep.pass() ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------

struct SpectrumArgs {
    int m = 1;
    double p = 4.0, q = 1.0;
    std::optional<double> ratio;
    std::string ratio_grid;
};

int cmd_spectrum(const Globals& g, const SpectrumArgs& a) {
    if (a.m < 1) throw ValidationError("--m must be >= 1");
    if (!(a.p > 0) || a.q == 0) throw ValidationError("spectrum needs p > 0 and q != 0");
    if (a.ratio.has_value() == !a.ratio_grid.empty())
        throw ValidationError("spectrum needs exactly one of --ratio or --ratio-grid");
    scenario::SpectrumScan s{a.m, a.p, a.q, a.ratio ? std::vector<double>{*a.ratio} : parse_grid(a.ratio_grid)};
    for (double y : s.ratios)
        if (!(y >= 0)) throw ValidationError("ratios must be non-negative");

    const auto rows = scenario::spectrum_rows(s);
    const double thr = bundle::u1_positivity_threshold(a.m, a.p, a.q);
    const auto br = scenario::sign_change(rows);
    json extra = {{"threshold", thr}};
    if (br) extra["sign_change"] = {br->first, br->second};
    emit(g, scenario::detail::render(scenario::spectrum_table(rows), g.format_or("csv"), extra));

    std::cerr << "positivity threshold a/b = " << io::fmt_double(thr);
    if (br) std::cerr << ", smallest eigenvalue changes sign in [" << io::fmt_double(br->first) << ", " << io::fmt_double(br->second) << "]";
    std::cerr << "\n";
    if (s.ratios.size() > 1 && thr >= s.ratios.front() && thr <= s.ratios.back())
        return br && br->first <= thr && thr <= br->second ? kOk : kCheckFailed;
    return kOk;
}

// ---------------------------------------------------------------------------

int cmd_presets(const Globals& g) {
    const json cat = bundle::catalog_json();
    const std::string fmt = g.format_or("text");
    std::string out;
    if (fmt == "json") {
        out = cat.dump(2) + "\n";
    } else if (fmt == "csv") {
        out = io::csv_row({"name", "variant", "sample", "total_space", "constants", "example"});
        for (const auto& e : cat)
            out += io::csv_row({e["name"], e["variant"], e["sample"], e["total_space"], e["constants"], e["example"]});
    } else {
        for (const auto& e : cat) {
            const auto fp = bundle::preset(e["sample"].get<std::string>());
            const json p = bundle::to_json(fp);
            std::string args;
            for (const char* k : {"m", "p", "q", "lambda", "lambda_hat", "lambda_check"})
                if (p.contains(k)) args += (args.empty() ? "" : ",") + io::fmt_double(p[k].get<double>());
            const std::string shown = e["name"] == e["sample"] ? e["name"].get<std::string>() : e["sample"].get<std::string>();
            out += shown + ": " + p["variant"].get<std::string>() + "(" + args + ") [" + e["total_space"].get<std::string>() +
                   "; " + e["example"].get<std::string>() + "]\n";
        }
    }
    emit(g, out);
    return kOk;
}

// ---------------------------------------------------------------------------

struct LimitArgs {
    std::string kind;
    std::optional<double> nu, k, xi, omega, tau;
    std::string grid;
};

int cmd_limits(const Globals& g, const LimitArgs& a) {
    const std::vector<std::string> kinds =
        a.kind == "all" ? std::vector<std::string>{"cigar", "omega", "hamilton", "collapse"} : std::vector<std::string>{a.kind};
    if (kinds.size() > 1 && !a.grid.empty()) throw ValidationError("--grid needs a single --kind");
    scenario::Tolerances tol;
    if (g.tol) tol.deviation = tol.residual = *g.tol;

    std::vector<std::pair<std::string, scenario::LimitStudy>> studies;
    for (const auto& kind : kinds) {
        auto l = scenario::limit_defaults(kind);
        if (a.nu) l.nu = *a.nu;
        if (a.k) l.k = *a.k;
        if (a.xi) l.xi = *a.xi;
        if (a.omega) l.omega = *a.omega;
        if (a.tau) l.tau = *a.tau;
        if (!a.grid.empty()) l.grid = parse_grid(a.grid);
        scenario::validate(l);
        studies.emplace_back(kind, l);
    }

    bool pass = true;
    json doc = json::object();
    std::string csv;
    for (const auto& [kind, l] : studies) {
        std::vector<analysis::Check> checks;
        const auto t = scenario::limit_table(l, tol, checks);
        for (const auto& c : checks) {
            pass = pass && c.pass;
            std::cerr << kind << ": " << c.name << " " << c.detail << (c.pass ? ": PASS" : ": FAIL") << "\n";
        }
        json cj = json::array();
        for (const auto& c : checks) cj.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
        doc[kind] = {{"rows", t.as_json()}, {"checks", cj}};
        if (kinds.size() > 1) csv += "# " + kind + "\n";
        csv += t.csv();
    }
    emit(g, g.format_or("csv") == "json" ? (kinds.size() > 1 ? doc : doc[kinds[0]]).dump(2) + "\n" : csv);
    return pass ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------------------

int cmd_run(const Globals& g, const std::string& file, int workers_flag) {
    const auto batch = scenario::load_scenario(file);
    const fs::path out = g.out.empty() ? fs::path("out") / batch.name : fs::path(g.out);
    const auto results = scenario::run_batch(batch, out, workers_flag);
    bool pass = true;
    json arr = json::array();
    for (const auto& r : results) {
        pass = pass && r.pass;
        arr.push_back(scenario::to_json(r));
    }
    if (g.format_or("text") == "json") {
        std::cout << json({{"name", batch.name}, {"pass", pass}, {"cases", arr}}).dump(2) << "\n";
    } else {
        for (const auto& r : results) std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << r.summary << "\n";
    }
    for (const auto& r : results)
        for (const auto& c : r.checks)
            if (!c.pass) std::cerr << r.name << ": check '" << c.name << "' failed: " << c.detail << "\n";
    return pass ? kOk : kCheckFailed;
}

int cmd_report(const Globals& g, const std::string& file) {
    const std::string text = io::read_file(file);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t line = scenario::detail::line_of(text, e.byte > 0 ? e.byte - 1 : 0);
        throw ParseError("line " + std::to_string(line) + ": " + e.what(), line);
    }
    for (const char* key : {"params", "branch", "clause", "checks", "pass", "summary"})
        if (!j.contains(key)) throw ValidationError(std::string("report is missing field '") + key + "'");
    if (g.format_or("text") == "json")
        std::cout << j.dump(2) << "\n";
    else
        std::cout << analysis::render_text(j);
    return j["pass"].get<bool>() ? kOk : kCheckFailed;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ancient Ricci flow solutions: closed-form verification and bundle flows", "ancient"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.set_version_flag("--version", scenario::kGenerator);

    Globals g;
    std::optional<double> tol;
    app.add_option("--out", g.out, "Output file (tables) or directory (flow, run)");
    app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"text", "csv", "json"}));
    app.add_option("--workers", g.workers, "Parallel workers for run")->check(CLI::PositiveNumber);
    app.add_option("--tol", tol, "Tolerance override for the main check")->check(CLI::PositiveNumber);

    VerifyArgs va;
    auto* verify = app.add_subcommand("verify-fateev", "Check the Fateev family against the flow equation");
    verify->add_option("--nu", va.nu, "Scale nu > 0 (default: the four acceptance pairs)");
    verify->add_option("--k", va.k, "Shape parameter with k^2 < 1");
    verify->add_option("--tau-grid", va.tau_grid, "Comma list or start:stop:step");
    verify->add_option("--theta-grid", va.theta_grid, "Comma list or start:stop:step");

    FlowArgs fa;
    auto* flowc = app.add_subcommand("flow", "Integrate a bundle system and classify the trajectory");
    flowc->add_option("--preset", fa.preset, "Catalog preset, e.g. octonionic or hopf_u1(1)");
    flowc->add_option("--params", fa.params, "Explicit system: variant:key=value,...");
    flowc->add_option("--a0", fa.a0, "Initial fiber scale");
    flowc->add_option("--b0", fa.b0, "Initial base scale")->capture_default_str();
    flowc->add_option("--y0", fa.y0, "Initial ratio a/b");
    flowc->add_option("--tau-span", fa.tau_span, "Forward end 'max' or 'start,max' (default 1,1e6)");
    flowc->add_option("--backward-span", fa.backward_span, "Backward span in tau")->capture_default_str();
    flowc->add_flag("--backward", fa.backward, "Integrate backward only and report events");

    SpectrumArgs sa;
    auto* spec = app.add_subcommand("spectrum", "Curvature-operator spectrum of the U(1) bundle over CP^m");
    spec->add_option("--m", sa.m, "Base dimension m")->capture_default_str();
    spec->add_option("--p", sa.p, "Base Einstein constant p")->capture_default_str();
    spec->add_option("--q", sa.q, "Connection constant q")->capture_default_str();
    spec->add_option("--ratio", sa.ratio, "Single ratio a/b");
    spec->add_option("--ratio-grid", sa.ratio_grid, "start:stop:step or comma list");

    app.add_subcommand("presets", "List the preset catalog");

    LimitArgs la;
    auto* limits = app.add_subcommand("limits", "Limit studies of the Fateev family");
    limits->add_option("--kind", la.kind, "cigar, omega, hamilton, collapse or all")
        ->required()
        ->check(CLI::IsMember({"cigar", "omega", "hamilton", "collapse", "all"}));
    limits->add_option("--nu", la.nu, "Scale nu");
    limits->add_option("--k", la.k, "Shape parameter k");
    limits->add_option("--xi", la.xi, "Profile parameter xi");
    limits->add_option("--omega", la.omega, "Omega-family parameter");
    limits->add_option("--tau", la.tau, "Time for the Hamilton rescale study");
    limits->add_option("--grid", la.grid, "Study grid: y, tau, nu or theta");

    std::string run_file;
    auto* run = app.add_subcommand("run", "Run a scenario or batch file");
    run->add_option("file", run_file, "Scenario JSON")->required();

    std::string report_file;
    auto* report = app.add_subcommand("report", "Render a flow report JSON as text");
    report->add_option("file", report_file, "Report JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }
    g.tol = tol;
    const bool workers_given = app.count("--workers") > 0;

    try {
        if (verify->parsed()) return cmd_verify(g, va);
        if (flowc->parsed()) return cmd_flow(g, fa);
        if (spec->parsed()) return cmd_spectrum(g, sa);
        if (app.got_subcommand("presets")) return cmd_presets(g);
        if (limits->parsed()) return cmd_limits(g, la);
        if (run->parsed()) return cmd_run(g, run_file, workers_given ? g.workers : 0);
        if (report->parsed()) return cmd_report(g, report_file);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const InvalidParams& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const UnknownPreset& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ComplexRoots& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kCheckFailed;
    }
    return kUsage;
}
