#pragma once

// Post-processing of trajectories: type-I/II verdicts, collapse diagnostics,
// limit extraction at both ends and the connector pipeline.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ancient/bundle_ode.hpp"
#include "ancient/errors.hpp"
#include "ancient/fateev.hpp"
#include "ancient/flow_integrator.hpp"

namespace ancient::analysis {

using bundle::FibrationParams;
using bundle::FlowState;
using flow::EventKind;
using flow::Trajectory;

// ---------------------------------------------------------------------------
// Curvature proxies

/// U1: largest |eigenvalue| of the CP^m spectrum; SU2 and Submersion: 1/b.
inline double curvature_proxy(const FibrationParams& fp, const FlowState& s) {
    if (const auto* u = std::get_if<bundle::U1Bundle>(&fp))
        return bundle::curvature_spectrum_u1_cpm(u->m, u->p, u->q, s.a, s.b).max_abs_value();
    return 1.0 / s.b;
}

inline std::string curvature_proxy_name(const FibrationParams& fp) {
    return fp.index() == 0 ? "max |eigenvalue| of the CP^m curvature operator" : "C/b envelope";
}

// ---------------------------------------------------------------------------
// Type classification

struct TypeVerdict {
    enum class Kind { TypeI, TypeII, Inconclusive };
    Kind kind = Kind::Inconclusive;
    double bound = 0;             // sup of τ·norm (TypeI)
    double witness_tau = 0;       // τ where τ·norm first exceeds 10× reference (TypeII)
    double witness_value = 0;
    double reference = 0;         // τ·norm at the sample nearest τ = 1
    double last_decade_increase = 0;
    std::string criterion;
};

inline std::string to_string(TypeVerdict::Kind k) {
    switch (k) {
    case TypeVerdict::Kind::TypeI: return "TypeI";
    case TypeVerdict::Kind::TypeII: return "TypeII";
    default: return "Inconclusive";
    }
}

inline constexpr double kTypeIStability = 1e-3;
inline constexpr double kTypeIIFactor = 10.0;

/// Verdict from samples (τ, τ·norm) with τ > 0 measured from the singular
/// time. Throws Inconclusive when neither criterion triggers.
inline TypeVerdict classify_type(std::vector<std::pair<double, double>> tau_norm) {
    std::erase_if(tau_norm, [](const auto& s) { return !(s.first > 0) || !std::isfinite(s.second); });
    if (tau_norm.size() < 3) throw Inconclusive("too few samples to classify");
    std::sort(tau_norm.begin(), tau_norm.end());
    const double t_max = tau_norm.back().first;

    TypeVerdict v;
    const auto ref_it = std::min_element(tau_norm.begin(), tau_norm.end(), [](const auto& x, const auto& y) {
        return std::fabs(std::log(x.first)) < std::fabs(std::log(y.first));
    });
    v.reference = ref_it->second;

    double sup_all = 0, sup_before = 0;
    bool have_before = false;
    for (const auto& [t, n] : tau_norm) {
        sup_all = std::max(sup_all, n);
        if (t <= t_max / 10.0) {
            sup_before = std::max(sup_before, n);
            have_before = true;
        }
    }
    if (have_before && sup_before > 0) {
        v.last_decade_increase = (sup_all - sup_before) / sup_before;
        if (v.last_decade_increase < kTypeIStability) {
            v.kind = TypeVerdict::Kind::TypeI;
            v.bound = sup_all;
            v.criterion = "sup tau*|Rm| increased by less than 1e-3 over the last decade of tau";
            return v;
        }
    }
    for (const auto& [t, n] : tau_norm)
        if (t >= ref_it->first && n > kTypeIIFactor * v.reference) {
            v.kind = TypeVerdict::Kind::TypeII;
            v.witness_tau = t;
            v.witness_value = n;
            v.criterion = "tau*|Rm| exceeded 10x its value at tau = 1";
            return v;
        }
    if (!have_before) throw Inconclusive("span shorter than one decade of tau");
    throw Inconclusive("tau*|Rm| neither stabilized nor grew tenfold (last-decade increase " +
                       std::to_string(v.last_decade_increase) + ")");
}

/// Samples (τ − τ₀, (τ − τ₀)·proxy) along a trajectory.
inline std::vector<std::pair<double, double>> scaled_norm_series(const FibrationParams& fp,
                                                                 const std::vector<FlowState>& samples,
                                                                 double tau0) {
    std::vector<std::pair<double, double>> out;
    for (const auto& s : samples) {
        const double sig = s.tau - tau0;
        if (sig > 0 && s.a > 0 && s.b > 0) out.emplace_back(sig, sig * curvature_proxy(fp, s));
    }
    return out;
}

inline TypeVerdict classify_type(const Trajectory& tr, double tau0 = 0.0) {
    return classify_type(scaled_norm_series(tr.params, tr.samples, tau0));
}

/// Fateev family with the focal Ricci component as the norm, on a geometric
/// τ grid.
inline TypeVerdict classify_type_fateev(const fateev::FateevParams& p, double tau_min = 1.0,
                                        double tau_max = 1e4, int per_decade = 10) {
    std::vector<std::pair<double, double>> series;
    const int n = static_cast<int>(std::ceil(std::log10(tau_max / tau_min) * per_decade));
    for (int i = 0; i <= n; ++i) {
        const double tau = tau_min * std::pow(tau_max / tau_min, double(i) / n);
        series.emplace_back(tau, tau * fateev::focal_ricci(p, fateev::tau_to_xi(p, tau)));
    }
    return classify_type(series);
}

// ---------------------------------------------------------------------------
// Collapse diagnostic

struct CollapseVerdict {
    enum class Kind { Collapsed, NonCollapsedHeuristic, Inconclusive };
    Kind kind = Kind::Inconclusive;
    /// a(τ_max)/a(τ_max/10) − 1
    double fiber_growth_last_decade = 0;
    /// √a·√norm at τ_max over its value at the start
    double product_ratio = 0;
    /// y(τ_max)/y(τ_max/10)
    double ratio_change_last_decade = 0;
    std::vector<std::array<double, 3>> evidence;  // (τ, √a, norm)
    std::string criterion;
};

inline std::string to_string(CollapseVerdict::Kind k) {
    switch (k) {
    case CollapseVerdict::Kind::Collapsed: return "Collapsed";
    case CollapseVerdict::Kind::NonCollapsedHeuristic: return "NonCollapsedHeuristic";
    default: return "Inconclusive";
    }
}

/// Uses the forward part of `tr` (samples with τ ≥ τ_start). Throws
/// Inconclusive on spans shorter than two decades.
inline CollapseVerdict collapse_diagnostic(const Trajectory& tr, double tau0 = 0.0) {
    std::vector<FlowState> fwd;
    const double t_start = tr.backward ? tr.tau_max() : tr.tau_min();
    for (const auto& s : tr.samples)
        if (s.tau >= t_start) fwd.push_back(s);
    if (tr.backward) std::reverse(fwd.begin(), fwd.end());
    if (fwd.size() < 3 || !((fwd.back().tau - tau0) >= 100.0 * (fwd.front().tau - tau0)))
        throw Inconclusive("collapse diagnostic needs at least two decades of tau");

    CollapseVerdict v;
    const double t_end = fwd.back().tau;
    const double t_dec = tau0 + (t_end - tau0) / 10.0;
    const FlowState end = fwd.back();
    const FlowState dec = tr.at(t_dec);
    const auto product = [&](const FlowState& s) { return std::sqrt(s.a * curvature_proxy(tr.params, s)); };
    v.fiber_growth_last_decade = end.a / dec.a - 1.0;
    v.product_ratio = product(end) / product(fwd.front());
    v.ratio_change_last_decade = end.y() / dec.y();
    const std::size_t stride = std::max<std::size_t>(1, fwd.size() / 50);
    for (std::size_t i = 0; i < fwd.size(); i += stride)
        v.evidence.push_back({fwd[i].tau, std::sqrt(fwd[i].a), curvature_proxy(tr.params, fwd[i])});

    if (v.fiber_growth_last_decade < 1e-2 && v.product_ratio < 0.1) {
        v.kind = CollapseVerdict::Kind::Collapsed;
        v.criterion = "fiber length bounded over the last decade while sqrt(a)*|Rm|^(1/2) -> 0";
    } else if (v.fiber_growth_last_decade > 1.0 && v.ratio_change_last_decade > 0.5 &&
               v.ratio_change_last_decade < 2.0) {
        v.kind = CollapseVerdict::Kind::NonCollapsedHeuristic;
        v.criterion = "fiber and base grow commensurately (heuristic, not a kappa-noncollapsing proof)";
    } else {
        throw Inconclusive("fiber neither bounded nor growing with the base");
    }
    return v;
}

/// ξ → ∞ end of the Fateev family: collapsed when the rescaled coefficients
/// reach the flat torus-times-line limit.
inline CollapseVerdict collapse_diagnostic_fateev(const fateev::FateevParams& p, double xi = 25.0,
                                                  double tol = 1e-6) {
    CollapseVerdict v;
    double worst = 0;
    for (double th : {0.2, 0.7, 1.2}) worst = std::max(worst, fateev::collapse_limit_deviation(p, xi, th));
    v.product_ratio = worst;
    if (worst > tol) throw Inconclusive("collapse-limit deviation " + std::to_string(worst));
    v.kind = CollapseVerdict::Kind::Collapsed;
    v.criterion = "rescaled metric within tolerance of the flat limit with a circle factor of bounded length";
    return v;
}

// ---------------------------------------------------------------------------
// Limits

struct Extrapolation {
    double value = NAN;
    double uncertainty = INFINITY;
    std::vector<double> sequence;
};

/// Aitken Δ² on a sequence converging geometrically. Every window of three
/// consecutive terms gives an estimate; the reported value is the one that
/// agrees best with its predecessor, which keeps the choice away from both the
/// pre-asymptotic head and the roundoff-dominated tail. The uncertainty is
/// that disagreement.
inline Extrapolation aitken_limit(const std::vector<double>& seq) {
    Extrapolation e;
    e.sequence = seq;
    const std::size_t n = seq.size();
    if (n < 4) throw Inconclusive("Aitken extrapolation needs four terms");
    const auto contracting = [&](std::size_t i) {
        const double d1 = seq[i + 1] - seq[i], d2 = seq[i + 2] - seq[i + 1];
        return d1 == 0.0 || std::fabs(d2) < std::fabs(d1);
    };
    const auto aitken = [&](std::size_t i) {
        const double d1 = seq[i + 1] - seq[i], d2 = seq[i + 2] - seq[i + 1];
        const double den = d2 - d1;
        if (d2 == 0.0) return seq[i + 2];
        if (std::fabs(den) <= 1e-14 * std::max(std::fabs(seq[i + 2]), 1e-300)) return seq[i + 2];
        return seq[i + 2] - d2 * d2 / den;
    };
    e.value = aitken(n - 3);
    for (std::size_t i = 1; i + 2 < n; ++i) {
        if (!contracting(i) || !contracting(i - 1)) continue;
        const double a = aitken(i), u = std::fabs(a - aitken(i - 1));
        if (u < e.uncertainty) {
            e.uncertainty = u;
            e.value = a;
        }
    }
    return e;
}

struct EndLimit {
    Extrapolation extrapolation;
    std::optional<double> matched_ratio;
    std::string matched_label;
};

struct LimitPair {
    EndLimit at_infinity;
    EndLimit at_singular;
};

inline constexpr double kMatchTolerance = 1e-3;

inline EndLimit match_limit(const FibrationParams& fp, const Extrapolation& ex) {
    EndLimit out;
    out.extrapolation = ex;
    if (!(ex.uncertainty <= kMatchTolerance)) return out;
    for (const auto& ray : bundle::einstein_rays(fp))
        if (std::fabs(ex.value - ray.ratio) <= kMatchTolerance) {
            out.matched_ratio = ray.ratio;
            out.matched_label = ray.label;
        }
    return out;
}

/// y at τ_max·2^{-n}, n = 7..0.
inline Extrapolation infinity_limit(const Trajectory& fwd, int levels = 8) {
    std::vector<double> seq;
    const double t_max = fwd.tau_max();
    for (int n = levels - 1; n >= 0; --n) {
        const double t = t_max * std::pow(0.5, n);
        if (t < fwd.tau_min()) continue;
        seq.push_back(fwd.at(t).y());
    }
    return aitken_limit(seq);
}

/// y where the vanishing factor min(a, b) has dropped to scale·2^{-n},
/// n = 10..10+levels−1, located on the dense output of `back`.
inline Extrapolation singular_limit(const Trajectory& back, int levels = 14) {
    const auto f = [](const FlowState& s) { return std::min(s.a, s.b); };
    const auto& start = back.backward ? back.samples.back() : back.samples.front();
    const double scale = std::max(start.a, start.b);
    // samples ordered from the start of integration toward the singular end
    std::vector<FlowState> path = back.samples;
    if (back.backward) std::reverse(path.begin(), path.end());

    std::vector<double> seq;
    for (int n = 10; n < 10 + levels; ++n) {
        const double level = scale * std::pow(0.5, n);
        // last crossing of the level before the end
        std::size_t i = path.size() - 1;
        while (i > 0 && f(path[i - 1]) <= level) --i;
        if (i == 0 || f(path[i]) > level) break;
        double lo = path[i - 1].tau, hi = path[i].tau;  // f(lo) > level ≥ f(hi)
        for (int it = 0; it < 200 && std::fabs(hi - lo) > 1e-15 * std::max(1.0, std::fabs(hi)); ++it) {
            const double mid = 0.5 * (lo + hi);
            (f(back.at(mid)) > level ? lo : hi) = mid;
        }
        seq.push_back(back.at(0.5 * (lo + hi)).y());
    }
    if (seq.size() < 4) throw Inconclusive("trajectory does not resolve the singular end");
    return aitken_limit(seq);
}

/// Ratio limits of a two-sided run; throws NoMatch when neither end
/// approaches an Einstein ratio.
inline LimitPair limit_ratio(const Trajectory& forward, const Trajectory& backward) {
    LimitPair lp;
    lp.at_infinity = match_limit(forward.params, infinity_limit(forward));
    lp.at_singular = match_limit(backward.params, singular_limit(backward));
    if (!lp.at_infinity.matched_ratio && !lp.at_singular.matched_ratio)
        throw NoMatch("neither end of the trajectory approaches an Einstein ratio");
    return lp;
}

// ---------------------------------------------------------------------------
// Two-sided runs and reports

struct TwoSidedOptions {
    flow::IntegratorOptions integrator;  // tolerances; span fields are overwritten
    double tau_start = 1.0;
    double tau_max = 1e6;
    double backward_span = 1e6;
};

struct TwoSided {
    Trajectory forward;
    Trajectory backward;
    double tau0 = 0;  // singular time, or start − backward_span if none
    EventKind singular_kind = EventKind::SpanEnd;

    /// Backward and forward samples joined at the start, ascending in τ.
    std::vector<FlowState> samples() const {
        std::vector<FlowState> out = backward.samples;
        out.insert(out.end(), forward.samples.begin() + 1, forward.samples.end());
        return out;
    }
};

inline TwoSided integrate_two_sided(const FibrationParams& fp, const FlowState& initial,
                                    const TwoSidedOptions& o = {}) {
    TwoSided ts;
    flow::IntegratorOptions io = o.integrator;
    io.t_start = o.tau_start;
    io.t_end = o.tau_max;
    FlowState init = initial;
    init.tau = o.tau_start;
    ts.forward = flow::integrate(fp, init, io);
    io.t_end = o.tau_start - o.backward_span;
    ts.backward = flow::integrate(fp, init, io);
    const flow::Event& last = ts.backward.events.back();
    ts.singular_kind = last.kind;
    ts.tau0 = last.tau;
    return ts;
}

enum class Branch { Ray, Connector, FiberCollapse, BaseCollapse, Collapsed };

inline std::string to_string(Branch b) {
    switch (b) {
    case Branch::Ray: return "ray";
    case Branch::Connector: return "connector";
    case Branch::FiberCollapse: return "fiber-collapse";
    case Branch::BaseCollapse: return "base-collapse";
    case Branch::Collapsed: return "collapsed";
    }
    return "?";
}

inline Branch classify_branch(const FibrationParams& fp, double y0) {
    auto roots = bundle::einstein_ratios(fp);
    std::sort(roots.begin(), roots.end());
    for (double r : roots)
        if (std::fabs(y0 - r) <= 1e-12 * std::max(1.0, r)) return Branch::Ray;
    if (fp.index() == 0) return y0 < roots[0] ? Branch::Collapsed : Branch::BaseCollapse;
    if (y0 < roots.front()) return Branch::FiberCollapse;
    if (y0 > roots.back()) return Branch::BaseCollapse;
    return Branch::Connector;
}

/// Plain-word statement a branch is checked against.
inline std::string branch_clause(const FibrationParams& fp, Branch b) {
    const std::string v = bundle::variant_name(fp);
    switch (b) {
    case Branch::Ray: return "Einstein ray: homothetic shrinking Einstein metric";
    case Branch::Collapsed:
        return "circle bundle with positive first integral: ancient, type-I and collapsed, fiber length bounded";
    case Branch::Connector:
        return v == "SU2" ? "SU(2) bundle between the r2 and r1 rays: ancient type-I connector"
                          : "submersion with Lambda1 < y < 1: ancient type-I connector from the "
                            "Lambda1 ray to the product ray";
    case Branch::FiberCollapse:
        return "below the lower ray: ancient solution whose fiber collapses at the singular time";
    case Branch::BaseCollapse: return "above the upper ray: base collapses at the singular time";
    }
    return "";
}

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct FlowReport {
    FibrationParams params;
    std::string preset;
    FlowState initial;
    Branch branch = Branch::Connector;
    std::string clause;
    std::optional<TypeVerdict> type_verdict;
    std::string type_error;
    std::optional<CollapseVerdict> collapse_verdict;
    std::string collapse_error;
    std::optional<LimitPair> limits;
    std::string limits_error;
    std::optional<std::pair<std::string, std::string>> connector;  // (from ray, to ray)
    EventKind singular_kind = EventKind::SpanEnd;
    double tau0 = 0;
    FlowState singular_state;
    bool monotone = false;
    double drift = 0;
    std::vector<Check> checks;

    bool pass() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
    }

    /// One-line verdict for terminal output.
    std::string summary() const {
        const auto num = [](double x) {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.6g", x);
            return std::string(buf);
        };
        const auto end = [&](const EndLimit& e) {
            return e.matched_ratio ? e.matched_label + " (" + num(*e.matched_ratio) + ")"
                                   : num(e.extrapolation.value);
        };
        std::string s;
        if (branch == Branch::Ray) {
            s = "Einstein ray";
        } else {
            if (type_verdict) s = to_string(type_verdict->kind) + ", ";
            s += to_string(branch);
            if (limits) s += " " + end(limits->at_infinity) + " -> " + end(limits->at_singular);
        }
        if (collapse_verdict) s += ", " + to_string(collapse_verdict->kind);
        if (singular_kind != EventKind::SpanEnd) s += ", " + flow::to_string(singular_kind) + " at tau0 = " + num(tau0);
        return s + (pass() ? " [PASS]" : " [FAIL]");
    }
};

namespace detail {

inline std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

/// Monotonicity of y over samples whose factors are resolved, i.e. both
/// above 1e-6 of `scale`; closer to a vanishing time y is at roundoff level.
inline bool y_monotone(const std::vector<FlowState>& all, double dir, double scale) {
    std::vector<FlowState> samples;
    for (const auto& s : all)
        if (std::min(s.a, s.b) >= 1e-6 * scale) samples.push_back(s);
    for (std::size_t i = 1; i < samples.size(); ++i) {
        if (samples[i].tau == samples[i - 1].tau) continue;
        const double dy = samples[i].y() - samples[i - 1].y();
        if (dir * dy > 1e-13 * std::fabs(samples[i].y())) return false;
    }
    return true;
}

} // namespace detail

/// Full pipeline: two-sided integration, type and collapse verdicts, limits
/// and branch-specific checks.
inline FlowReport flow_report(const FibrationParams& fp, const FlowState& initial,
                              const TwoSidedOptions& o = {}, const std::string& preset_name = "",
                              TwoSided* run_out = nullptr) {
    FlowReport r;
    r.params = fp;
    r.preset = preset_name;
    r.initial = initial;
    r.initial.tau = o.tau_start;
    r.branch = classify_branch(fp, initial.y());
    r.clause = branch_clause(fp, r.branch);

    const TwoSided ts = integrate_two_sided(fp, initial, o);
    r.singular_kind = ts.singular_kind;
    r.tau0 = r.branch == Branch::Ray ? 0.0 : ts.tau0;
    r.singular_state = ts.backward.samples.front();
    r.drift = std::max(ts.forward.drift, ts.backward.drift);
    const auto all = ts.samples();

    // Vanish events give the singular time; rays are measured from τ = 0.
    const bool singular_found = ts.singular_kind != EventKind::SpanEnd;
    const double t0 = r.branch == Branch::Ray ? 0.0 : (singular_found ? ts.tau0 : 0.0);
    try {
        r.type_verdict = classify_type(scaled_norm_series(fp, all, t0));
    } catch (const Inconclusive& e) {
        r.type_error = e.what();
    }
    try {
        r.collapse_verdict = collapse_diagnostic(ts.forward, t0);
    } catch (const Inconclusive& e) {
        r.collapse_error = e.what();
    }
    if (r.branch != Branch::Ray) {
        try {
            r.limits = limit_ratio(ts.forward, ts.backward);
        } catch (const Error& e) {
            r.limits_error = e.what();
        }
    }

    auto roots = bundle::einstein_ratios(fp);
    std::sort(roots.begin(), roots.end());
    const auto rays = bundle::einstein_rays(fp);
    const auto label_of = [&](double ratio) {
        for (const auto& ray : rays)
            if (ray.ratio == ratio) return ray.label;
        return std::string("?");
    };
    // Sign of dy/dτ at the start fixes the expected monotonicity.
    const double rate = bundle::ratio_rate(fp, r.initial);
    r.monotone = detail::y_monotone(all, rate < 0 ? 1.0 : -1.0, std::max(initial.a, initial.b));

    const auto add = [&](std::string name, bool pass, std::string detail) {
        r.checks.push_back({std::move(name), pass, std::move(detail)});
    };
    const bool type_i = r.type_verdict && r.type_verdict->kind == TypeVerdict::Kind::TypeI;
    const std::string type_detail =
        r.type_verdict ? to_string(r.type_verdict->kind) + " (" + r.type_verdict->criterion + ")"
                       : r.type_error;
    add("drift", !ts.forward.rejected && !ts.backward.rejected, "max drift " + detail::fmt(r.drift));

    const auto end_matches = [&](const EndLimit& e, double target) {
        return e.matched_ratio && *e.matched_ratio == target;
    };
    const auto end_detail = [&](const EndLimit& e) {
        return detail::fmt(e.extrapolation.value) + " +/- " + detail::fmt(e.extrapolation.uncertainty);
    };

    switch (r.branch) {
    case Branch::Ray: {
        const double y0 = initial.y();
        double worst_y = 0, worst_n = 0;
        const auto series = scaled_norm_series(fp, all, 0.0);
        for (const auto& s : all) worst_y = std::max(worst_y, std::fabs(s.y() - y0) / y0);
        for (const auto& [t, n] : series) worst_n = std::max(worst_n, std::fabs(n - series.front().second) / series.front().second);
        add("ratio constant", worst_y <= 1e-10, "max relative deviation " + detail::fmt(worst_y));
        add("tau*norm constant", worst_n <= 1e-10, "max relative deviation " + detail::fmt(worst_n));
        add("type-I", type_i, type_detail);
        break;
    }
    case Branch::Connector: {
        add("monotone ratio", r.monotone, rate < 0 ? "y decreasing in tau" : "y increasing in tau");
        add("type-I", type_i, type_detail);
        const bool lim_ok = r.limits && end_matches(r.limits->at_infinity, roots.front()) &&
                            end_matches(r.limits->at_singular, roots.back());
        add("limits", lim_ok,
            r.limits ? "infinity " + end_detail(r.limits->at_infinity) + ", singular " +
                           end_detail(r.limits->at_singular)
                     : r.limits_error);
        if (lim_ok) r.connector = std::make_pair(label_of(roots.front()), label_of(roots.back()));
        break;
    }
    case Branch::FiberCollapse: {
        add("monotone ratio", r.monotone, "");
        add("type-I", type_i, type_detail);
        const FlowState& sv = r.singular_state;
        add("fiber vanishes", r.singular_kind == EventKind::FiberVanish && sv.a <= 1e-8 && sv.b >= 0.1,
            flow::to_string(r.singular_kind) + " at tau0 = " + detail::fmt(r.tau0) + " with a = " +
                detail::fmt(sv.a) + ", b = " + detail::fmt(sv.b));
        add("limit at infinity", r.limits && end_matches(r.limits->at_infinity, roots.front()),
            r.limits ? end_detail(r.limits->at_infinity) : r.limits_error);
        break;
    }
    case Branch::Collapsed: {
        add("type-I", type_i, type_detail);
        add("collapsed",
            r.collapse_verdict && r.collapse_verdict->kind == CollapseVerdict::Kind::Collapsed,
            r.collapse_verdict ? to_string(r.collapse_verdict->kind) : r.collapse_error);
        const auto& u = std::get<bundle::U1Bundle>(fp);
        const double thr = bundle::u1_positivity_threshold(u.m, u.p, u.q);
        bool pos = true;
        for (const auto& s : all)
            if (s.y() < thr && s.a > 0 && s.b > 0)
                pos &= bundle::curvature_spectrum_u1_cpm(u.m, u.p, u.q, s.a, s.b).positive();
        add("positive curvature operator below threshold", pos,
            "threshold a/b = " + detail::fmt(thr));
        add("limit at singular time", r.limits && end_matches(r.limits->at_singular, roots.front()),
            r.limits ? end_detail(r.limits->at_singular) : r.limits_error);
        break;
    }
    case Branch::BaseCollapse:
        add("base vanishes", r.singular_kind == EventKind::BaseVanish ||
                                 ts.forward.has_event(EventKind::BaseVanish),
            flow::to_string(r.singular_kind));
        break;
    }
    if (run_out) *run_out = ts;
    return r;
}

/// Connector pipeline; requires two rays and y₀ strictly between them
/// unless `allow_other_branches`.
inline FlowReport connector_check(const FibrationParams& fp, double y0, double b0 = 1.0,
                                  const TwoSidedOptions& o = {}, bool allow_other_branches = true,
                                  const std::string& preset_name = "") {
    if (bundle::einstein_ratios(fp).size() < 2)
        throw InvalidParams("connector check needs a variant with two Einstein rays");
    if (!allow_other_branches && classify_branch(fp, y0) != Branch::Connector)
        throw InvalidParams("y0 is not strictly between the Einstein ratios");
    return flow_report(fp, FlowState{o.tau_start, y0 * b0, b0}, o, preset_name);
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const Extrapolation& e) {
    return {{"value", e.value}, {"uncertainty", std::isfinite(e.uncertainty) ? nlohmann::json(e.uncertainty) : nlohmann::json(nullptr)}};
}

inline nlohmann::json to_json(const EndLimit& e) {
    nlohmann::json j = to_json(e.extrapolation);
    j["matched_ratio"] = e.matched_ratio ? nlohmann::json(*e.matched_ratio) : nlohmann::json(nullptr);
    j["matched_ray"] = e.matched_ratio ? nlohmann::json(e.matched_label) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json to_json(const FlowReport& r) {
    using nlohmann::json;
    json j;
    j["params"] = bundle::to_json(r.params);
    j["preset"] = r.preset.empty() ? json(nullptr) : json(r.preset);
    j["initial"] = {{"tau", r.initial.tau}, {"a", r.initial.a}, {"b", r.initial.b}, {"y", r.initial.y()}};
    j["branch"] = to_string(r.branch);
    j["clause"] = r.clause;
    if (r.type_verdict) {
        const auto& t = *r.type_verdict;
        j["type_verdict"] = {{"kind", to_string(t.kind)},
                             {"criterion", t.criterion},
                             {"bound", t.bound},
                             {"reference", t.reference},
                             {"last_decade_increase", t.last_decade_increase},
                             {"witness_tau", t.witness_tau},
                             {"witness_value", t.witness_value},
                             {"curvature_proxy", curvature_proxy_name(r.params)}};
    } else {
        j["type_verdict"] = {{"kind", "Inconclusive"}, {"criterion", r.type_error}};
    }
    if (r.collapse_verdict) {
        const auto& c = *r.collapse_verdict;
        j["collapse_verdict"] = {{"kind", to_string(c.kind)},
                                 {"criterion", c.criterion},
                                 {"fiber_growth_last_decade", c.fiber_growth_last_decade},
                                 {"product_ratio", c.product_ratio},
                                 {"ratio_change_last_decade", c.ratio_change_last_decade}};
    } else {
        j["collapse_verdict"] = {{"kind", "Inconclusive"}, {"criterion", r.collapse_error}};
    }
    if (r.limits)
        j["limits"] = {{"tau_to_infinity", to_json(r.limits->at_infinity)},
                       {"tau_to_singular", to_json(r.limits->at_singular)},
                       {"note", "connection is operationalized as ratio convergence plus ray matching"}};
    else
        j["limits"] = r.branch == Branch::Ray ? json(nullptr) : json({{"error", r.limits_error}});
    j["connector"] = r.connector ? json({{"from", r.connector->first}, {"to", r.connector->second}})
                                 : json(nullptr);
    j["singular"] = {{"event", flow::to_string(r.singular_kind)},
                     {"tau0", r.tau0},
                     {"a", r.singular_state.a},
                     {"b", r.singular_state.b}};
    j["monotone_ratio"] = r.monotone;
    j["drift"] = r.drift;
    json checks = json::array();
    for (const auto& c : r.checks) checks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    j["checks"] = checks;
    j["pass"] = r.pass();
    j["summary"] = r.summary();
    return j;
}

/// Human-readable rendering of a FlowReport JSON document.
inline std::string render_text(const nlohmann::json& j) {
    std::string out;
    const auto line = [&](const std::string& k, const std::string& v) { out += k + ": " + v + "\n"; };
    const auto num = [](const nlohmann::json& x) {
        return x.is_number() ? detail::fmt(x.get<double>()) : std::string("n/a");
    };
    line("system", j.at("params").dump());
    if (j.contains("preset") && j["preset"].is_string()) line("preset", j["preset"].get<std::string>());
    line("branch", j.at("branch").get<std::string>());
    line("clause", j.at("clause").get<std::string>());
    line("initial", "a = " + num(j["initial"]["a"]) + ", b = " + num(j["initial"]["b"]) +
                        ", y = " + num(j["initial"]["y"]));
    line("type", j["type_verdict"]["kind"].get<std::string>() + " (" +
                     j["type_verdict"]["criterion"].get<std::string>() + ")");
    line("collapse", j["collapse_verdict"]["kind"].get<std::string>() + " (" +
                         j["collapse_verdict"]["criterion"].get<std::string>() + ")");
    if (j.contains("limits") && j["limits"].is_object() && j["limits"].contains("tau_to_infinity")) {
        for (const char* end : {"tau_to_infinity", "tau_to_singular"}) {
            const auto& e = j["limits"][end];
            std::string s = num(e["value"]) + " +/- " + num(e["uncertainty"]);
            if (e["matched_ray"].is_string()) s += " (ray " + e["matched_ray"].get<std::string>() + ")";
            line(std::string("limit ") + end, s);
        }
    }
    if (j["connector"].is_object())
        line("connector", j["connector"]["from"].get<std::string>() + " -> " +
                              j["connector"]["to"].get<std::string>());
    line("singular end", j["singular"]["event"].get<std::string>() + " at tau0 = " +
                             num(j["singular"]["tau0"]));
    line("drift", num(j["drift"]));
    for (const auto& c : j["checks"])
        out += std::string(c["pass"].get<bool>() ? "  [PASS] " : "  [FAIL] ") +
               c["name"].get<std::string>() +
               (c["detail"].get<std::string>().empty() ? "" : ": " + c["detail"].get<std::string>()) + "\n";
    line("verdict", j["summary"].get<std::string>());
    return out;
}

// ---------------------------------------------------------------------------
// S^15 inventory

struct InventoryEntry {
    std::string preset;
    double y0 = 0;
    Branch expected = Branch::Connector;
};

/// The five non-ray ancient trajectories on S^15 built from the catalog.
inline std::vector<InventoryEntry> s15_inventory_plan() {
    const double q3 = bundle::submersion_constants(std::get<bundle::Submersion>(bundle::preset("quaternionic_submersion(3)"))).Lambda1;
    const double oc = bundle::submersion_constants(std::get<bundle::Submersion>(bundle::preset("octonionic"))).Lambda1;
    return {
        {"hopf_u1(7)", 2.0, Branch::Collapsed},
        {"quaternionic_submersion(3)", 0.5, Branch::Connector},
        {"octonionic", 0.5, Branch::Connector},
        {"quaternionic_submersion(3)", 0.5 * q3, Branch::FiberCollapse},
        {"octonionic", 0.5 * oc, Branch::FiberCollapse},
    };
}

inline std::vector<FlowReport> s15_inventory(const TwoSidedOptions& o = {}) {
    std::vector<FlowReport> out;
    for (const auto& e : s15_inventory_plan()) {
        const auto fp = bundle::preset(e.preset);
        out.push_back(flow_report(fp, FlowState{o.tau_start, e.y0, 1.0}, o, e.preset));
    }
    return out;
}

} // namespace ancient::analysis
