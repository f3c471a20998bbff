#pragma once

// Dormand–Prince 5(4) with PI step control, dense output and event location,
// specialised to the fibration systems and the Fateev reduced system.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ancient/bundle_ode.hpp"
#include "ancient/errors.hpp"
#include "ancient/fateev.hpp"

namespace ancient::flow {

struct IntegratorOptions {
    double rel_tol = 1e-11;
    double abs_tol = 1e-14;
    double max_step = std::numeric_limits<double>::infinity();
    double event_tol = 1e-10;
    double t_start = 1.0;
    double t_end = 10.0;
    /// Trajectories whose first-integral drift exceeds this are marked rejected.
    double drift_bound = 1e-6;
    /// Samples closer than this (relative) to an Einstein ratio are skipped
    /// when measuring drift; the first integral is singular there.
    double separatrix_exclusion = 1e-4;
    /// Ratio values whose crossings are reported as events.
    std::vector<double> ratio_crossings;
    std::size_t max_steps = 2'000'000;

    void validate() const {
        if (!(rel_tol > 0 && abs_tol > 0 && event_tol > 0 && max_step > 0))
            throw InvalidParams("integrator tolerances must be positive");
        if (!std::isfinite(t_start) || std::isnan(t_end))
            throw InvalidParams("integration span must be finite at its start");
    }
};

// ---------------------------------------------------------------------------
// Generic DOPRI5 core

template <std::size_t N>
using State = std::array<double, N>;

/// Hairer's continuous extension of one accepted step on [t, t + h].
template <std::size_t N>
struct DenseSegment {
    double t = 0, h = 0;
    std::array<State<N>, 5> rc{};

    State<N> eval(double at) const {
        const double s = (at - t) / h;
        const double s1 = 1.0 - s;
        State<N> out{};
        for (std::size_t i = 0; i < N; ++i)
            out[i] = rc[0][i] +
                     s * (rc[1][i] + s1 * (rc[2][i] + s * (rc[3][i] + s1 * rc[4][i])));
        return out;
    }

    bool contains(double at) const {
        const double lo = std::min(t, t + h), hi = std::max(t, t + h);
        return at >= lo && at <= hi;
    }
};

struct EventSpec {
    /// Event fires where g changes sign.
    std::function<double(double t, const double* y)> g;
    bool terminal = false;
    int tag = 0;
};

template <std::size_t N>
struct EventHit {
    double t = 0;
    State<N> y{};
    int tag = 0;
};

template <std::size_t N>
struct RawSolution {
    std::vector<double> t;
    std::vector<State<N>> y;
    std::vector<DenseSegment<N>> dense;
    std::vector<EventHit<N>> events;
    bool stopped_by_event = false;
    bool stalled = false;  // step size fell below the floor
};

namespace dp {
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                        a75 = -2187.0 / 6784, a76 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
inline constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
} // namespace dp

/// Integrates y′ = f(t, y) from t0 to t1 (either direction). Stops at the
/// first terminal event. If the step size collapses the solution is returned
/// with `stalled` set; callers decide whether that is an error.
template <std::size_t N, class F>
RawSolution<N> dopri5(F&& f, double t0, const State<N>& y0, double t1,
                      const IntegratorOptions& o, const std::vector<EventSpec>& events = {}) {
    o.validate();
    using namespace dp;
    RawSolution<N> out;
    const double dir = t1 >= t0 ? 1.0 : -1.0;
    out.t.push_back(t0);
    out.y.push_back(y0);
    if (t1 == t0) return out;

    const auto norm = [&](const State<N>& err, const State<N>& ya, const State<N>& yb) {
        double acc = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double sc = o.abs_tol + o.rel_tol * std::max(std::fabs(ya[i]), std::fabs(yb[i]));
            acc += (err[i] / sc) * (err[i] / sc);
        }
        return std::sqrt(acc / N);
    };
    const auto axpy = [](const State<N>& y, double h,
                         std::initializer_list<std::pair<double, const State<N>*>> terms) {
        State<N> r = y;
        for (std::size_t i = 0; i < N; ++i) {
            double acc = 0.0;
            for (const auto& [c, k] : terms) acc += c * (*k)[i];
            r[i] += h * acc;
        }
        return r;
    };
    const auto finite = [](const State<N>& y) {
        for (double v : y)
            if (!std::isfinite(v)) return false;
        return true;
    };

    double t = t0;
    State<N> y = y0;
    State<N> k1 = f(t, y);

    // Initial step from the second-derivative heuristic.
    double h;
    {
        State<N> sc{};
        double d0 = 0, d1n = 0;
        for (std::size_t i = 0; i < N; ++i) {
            sc[i] = o.abs_tol + o.rel_tol * std::fabs(y[i]);
            d0 += (y[i] / sc[i]) * (y[i] / sc[i]);
            d1n += (k1[i] / sc[i]) * (k1[i] / sc[i]);
        }
        d0 = std::sqrt(d0 / N);
        d1n = std::sqrt(d1n / N);
        double h0 = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
        h0 = std::min(h0, std::fabs(t1 - t0));
        const State<N> y1 = axpy(y, dir * h0, {{1.0, &k1}});
        const State<N> k2 = f(t + dir * h0, y1);
        double d2 = 0;
        for (std::size_t i = 0; i < N; ++i) d2 += ((k2[i] - k1[i]) / sc[i]) * ((k2[i] - k1[i]) / sc[i]);
        d2 = std::sqrt(d2 / N) / h0;
        const double h1 = std::max(d1n, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                                     : std::pow(0.01 / std::max(d1n, d2), 0.2);
        h = std::min({100 * h0, h1, o.max_step, std::fabs(t1 - t0)});
        if (!(h > 0)) h = std::min(1e-6, std::fabs(t1 - t0));
    }

    std::vector<double> g_prev;
    for (const auto& e : events) g_prev.push_back(e.g(t, y.data()));

    constexpr double beta = 0.04, expo1 = 0.2 - beta * 0.75, safe = 0.9;
    double facold = 1e-4;
    bool reject = false;

    for (std::size_t step = 0; step < o.max_steps; ++step) {
        if (h < 1e-14 * std::max(1.0, std::fabs(t))) {
            out.stalled = true;
            return out;
        }
        bool last = false;
        if (std::fabs(t1 - t) <= h * (1.0 + 1e-12)) {
            h = std::fabs(t1 - t);
            last = true;
        }
        const double hs = dir * h;
        const State<N> y2 = axpy(y, hs, {{a21, &k1}});
        const State<N> k2 = f(t + c2 * hs, y2);
        const State<N> y3 = axpy(y, hs, {{a31, &k1}, {a32, &k2}});
        const State<N> k3 = f(t + c3 * hs, y3);
        const State<N> y4 = axpy(y, hs, {{a41, &k1}, {a42, &k2}, {a43, &k3}});
        const State<N> k4 = f(t + c4 * hs, y4);
        const State<N> y5 = axpy(y, hs, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}});
        const State<N> k5 = f(t + c5 * hs, y5);
        const State<N> y6 =
            axpy(y, hs, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}});
        const State<N> k6 = f(t + hs, y6);
        const State<N> yn =
            axpy(y, hs, {{a71, &k1}, {a73, &k3}, {a74, &k4}, {a75, &k5}, {a76, &k6}});
        const State<N> k7 = f(t + hs, yn);

        State<N> err{};
        for (std::size_t i = 0; i < N; ++i)
            err[i] = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                           e7 * k7[i]);
        double en = norm(err, y, yn);
        if (!finite(yn) || !finite(k7) || !std::isfinite(en)) en = 1e10;

        const double fac11 = std::pow(en, expo1);
        double fac = fac11 / std::pow(facold, beta);
        fac = std::clamp(fac / safe, 0.2, 10.0);
        double hnew = h / fac;

        if (en > 1.0) {
            h = h / std::min(fac11 / safe, 10.0);
            if (!std::isfinite(h) || en >= 1e10) h = h * 0.1;
            reject = true;
            continue;
        }

        facold = std::max(en, 1e-4);
        DenseSegment<N> seg;
        seg.t = t;
        seg.h = hs;
        for (std::size_t i = 0; i < N; ++i) {
            const double ydiff = yn[i] - y[i];
            const double bspl = hs * k1[i] - ydiff;
            seg.rc[0][i] = y[i];
            seg.rc[1][i] = ydiff;
            seg.rc[2][i] = bspl;
            seg.rc[3][i] = ydiff - hs * k7[i] - bspl;
            seg.rc[4][i] = hs * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] +
                                 d6 * k6[i] + d7 * k7[i]);
        }
        const double tn = last ? t1 : t + hs;

        // Event detection on the accepted step.
        double t_stop = tn;
        bool terminal_hit = false;
        std::vector<EventHit<N>> hits;
        for (std::size_t e = 0; e < events.size(); ++e) {
            const double gn = events[e].g(tn, yn.data());
            const double gp = g_prev[e];
            g_prev[e] = gn;
            if (!(gp != 0.0 && (gp < 0.0) != (gn < 0.0))) continue;
            double lo = t, hi = tn, glo = gp;
            for (int it = 0; it < 200 && std::fabs(hi - lo) > o.event_tol; ++it) {
                const double mid = 0.5 * (lo + hi);
                const State<N> ym = seg.eval(mid);
                const double gm = events[e].g(mid, ym.data());
                if ((gm < 0.0) == (glo < 0.0)) { lo = mid; glo = gm; } else { hi = mid; }
            }
            const double te = 0.5 * (lo + hi);
            hits.push_back({te, seg.eval(te), events[e].tag});
            if (events[e].terminal && dir * (te - t_stop) < 0) {
                t_stop = te;
                terminal_hit = true;
            } else if (events[e].terminal) {
                terminal_hit = true;
            }
        }
        std::sort(hits.begin(), hits.end(),
                  [&](const auto& x, const auto& y2_) { return dir * (x.t - y2_.t) < 0; });
        for (const auto& hit : hits)
            if (dir * (hit.t - t_stop) <= 0) out.events.push_back(hit);

        if (terminal_hit) {
            out.dense.push_back(seg);
            out.t.push_back(t_stop);
            out.y.push_back(seg.eval(t_stop));
            out.stopped_by_event = true;
            return out;
        }

        out.dense.push_back(seg);
        t = tn;
        y = yn;
        k1 = k7;
        out.t.push_back(t);
        out.y.push_back(y);
        if (last) return out;

        hnew = std::min(hnew, o.max_step);
        if (reject) hnew = std::min(hnew, h);
        reject = false;
        h = hnew;
    }
    throw NoConvergence("integration exceeded the step budget");
}

// ---------------------------------------------------------------------------
// Fibration trajectories

enum class EventKind { FiberVanish, BaseVanish, Extinction, RatioCross, SpanEnd };

inline std::string to_string(EventKind k) {
    switch (k) {
    case EventKind::FiberVanish: return "FiberVanish";
    case EventKind::BaseVanish: return "BaseVanish";
    case EventKind::Extinction: return "Extinction";
    case EventKind::RatioCross: return "RatioCross";
    case EventKind::SpanEnd: return "SpanEnd";
    }
    return "?";
}

struct Event {
    double tau = 0;
    EventKind kind = EventKind::SpanEnd;
    double value = 0;  // crossed ratio for RatioCross
    bundle::FlowState state;
};

struct Trajectory {
    bundle::FibrationParams params;
    std::vector<bundle::FlowState> samples;  // strictly increasing τ
    std::vector<Event> events;
    std::vector<DenseSegment<2>> dense;
    double drift = 0;
    bool rejected = false;
    bool backward = false;

    double tau_min() const { return samples.front().tau; }
    double tau_max() const { return samples.back().tau; }

    bool has_event(EventKind k) const {
        return std::any_of(events.begin(), events.end(), [&](const Event& e) { return e.kind == k; });
    }

    const Event* first_event(EventKind k) const {
        for (const auto& e : events)
            if (e.kind == k) return &e;
        return nullptr;
    }

    /// Dense-output state at τ inside the covered span.
    bundle::FlowState at(double tau) const {
        for (const auto& seg : dense)
            if (seg.contains(tau)) {
                const State<2> s = seg.eval(tau);
                return {tau, s[0], s[1]};
            }
        throw DomainError("tau=" + std::to_string(tau) + " outside the trajectory");
    }
};

/// max over samples of |Λ(τ) − Λ(τ_start)| / (1 + |Λ(τ_start)|), skipping
/// samples within `exclusion` (relative) of a ratio in `avoid`.
template <class Integral>
double monitor_invariant(const std::vector<bundle::FlowState>& samples, Integral&& integral,
                         const std::vector<double>& avoid = {}, double exclusion = 0.0) {
    const auto usable = [&](const bundle::FlowState& s) {
        for (double r : avoid)
            if (std::fabs(s.y() - r) <= exclusion * std::max(1.0, std::fabs(r))) return false;
        return s.a > 0 && s.b > 0;
    };
    bool have_ref = false;
    double ref = 0, worst = 0;
    for (const auto& s : samples) {
        if (!usable(s)) continue;
        const double v = integral(s);
        if (!have_ref) {
            ref = v;
            have_ref = true;
            continue;
        }
        worst = std::max(worst, std::fabs(v - ref) / (1.0 + std::fabs(ref)));
    }
    return worst;
}

/// Trajectory drift. Samples inside the collapse neighbourhood, where a or b
/// has fallen below 1e-3 of its starting scale, are skipped along with those
/// next to a ray.
inline double monitor_invariant(const Trajectory& traj, double exclusion = 1e-4) {
    // The reference sample is the start of integration, which is the last
    // sample of a backward trajectory.
    std::vector<bundle::FlowState> ordered;
    const auto& start = traj.backward ? traj.samples.back() : traj.samples.front();
    const double floor = 1e-3 * std::max(start.a, start.b);
    for (const auto& s : traj.samples)
        if (std::min(s.a, s.b) >= floor) ordered.push_back(s);
    if (traj.backward) std::reverse(ordered.begin(), ordered.end());
    return monitor_invariant(
        ordered, [&](const bundle::FlowState& s) { return bundle::first_integral(traj.params, s).value; },
        bundle::einstein_ratios(traj.params), exclusion);
}

/// Integrates a fibration system from (t_start, a, b) to t_end; t_end < t_start
/// integrates backward by negating the vector field. Stops at the first
/// vanishing of a or b.
inline Trajectory integrate(const bundle::FibrationParams& fp, const bundle::FlowState& initial,
                            const IntegratorOptions& opts) {
    if (!(initial.a > 0 && initial.b > 0))
        throw DomainError("initial state must have a > 0 and b > 0");
    const double sign = opts.t_end >= opts.t_start ? 1.0 : -1.0;
    const double t0 = opts.t_start;
    const auto rhs = [&](double s, const State<2>& y) {
        (void)s;
        const bundle::Derivative d = bundle::vector_field(fp, y[0], y[1]);
        return State<2>{sign * d.da, sign * d.db};
    };

    constexpr int kA = 1, kB = 2, kRatio = 100;
    std::vector<EventSpec> ev = {
        {[](double, const double* y) { return y[0]; }, true, kA},
        {[](double, const double* y) { return y[1]; }, true, kB},
    };
    for (std::size_t i = 0; i < opts.ratio_crossings.size(); ++i) {
        const double r = opts.ratio_crossings[i];
        ev.push_back({[r](double, const double* y) { return y[0] - r * y[1]; }, false,
                      kRatio + static_cast<int>(i)});
    }

    // Integrate in s = sign·(τ − t0) ≥ 0.
    const double s_end = std::fabs(opts.t_end - t0);
    IntegratorOptions o = opts;
    RawSolution<2> raw =
        dopri5<2>(rhs, 0.0, State<2>{initial.a, initial.b}, s_end, o, ev);

    Trajectory tr;
    tr.params = fp;
    tr.backward = sign < 0;
    const auto tau_of = [&](double s) { return t0 + sign * s; };
    for (std::size_t i = 0; i < raw.t.size(); ++i)
        tr.samples.push_back({tau_of(raw.t[i]), raw.y[i][0], raw.y[i][1]});
    for (auto seg : raw.dense) {
        DenseSegment<2> d = seg;
        d.t = tau_of(seg.t);
        d.h = sign * seg.h;
        tr.dense.push_back(d);
    }

    const auto classify_vanish = [&](double s, const State<2>& y) {
        const double scale = std::max(initial.a, initial.b);
        const bool a0 = y[0] <= 1e-6 * scale, b0 = y[1] <= 1e-6 * scale;
        if (a0 && b0) return EventKind::Extinction;
        (void)s;
        return a0 ? EventKind::FiberVanish : EventKind::BaseVanish;
    };

    bool terminal = false;
    for (const auto& h : raw.events) {
        Event e;
        e.tau = tau_of(h.t);
        e.state = {e.tau, h.y[0], h.y[1]};
        if (h.tag >= kRatio) {
            e.kind = EventKind::RatioCross;
            e.value = opts.ratio_crossings[h.tag - kRatio];
        } else {
            e.kind = classify_vanish(h.t, h.y);
            terminal = true;
        }
        tr.events.push_back(e);
    }
    if (raw.stalled) {
        // Step collapse while approaching a singular time counts as the
        // vanishing event at the last reached τ.
        // A ratio running off to 0 or ∞ is the same collapse seen relative
        // to the other factor.
        const auto& y = raw.y.back();
        const double scale = std::max(initial.a, initial.b);
        const double y0 = initial.a / initial.b, yr = y[0] / y[1];
        const bool a0 = y[0] <= 1e-3 * scale || yr <= 1e-8 * y0;
        const bool b0 = y[1] <= 1e-3 * scale || yr >= 1e8 * y0;
        if (!a0 && !b0)
            throw StepUnderflow("step size underflow at tau=" + std::to_string(tau_of(raw.t.back())));
        Event e;
        e.tau = tau_of(raw.t.back());
        e.state = tr.samples.back();
        e.kind = a0 && b0 ? EventKind::Extinction
                          : (a0 ? EventKind::FiberVanish : EventKind::BaseVanish);
        tr.events.push_back(e);
        terminal = true;
    }
    if (!terminal) {
        Event e;
        e.tau = tr.samples.back().tau;
        e.kind = EventKind::SpanEnd;
        e.state = tr.samples.back();
        tr.events.push_back(e);
    }

    if (tr.backward) {
        std::reverse(tr.samples.begin(), tr.samples.end());
        std::reverse(tr.dense.begin(), tr.dense.end());
    }
    tr.drift = monitor_invariant(tr, opts.separatrix_exclusion);
    tr.rejected = tr.drift > opts.drift_bound;
    return tr;
}

// ---------------------------------------------------------------------------
// Fateev reduced system

struct FateevTrajectory {
    fateev::FateevParams params;
    std::vector<fateev::FateevState> samples;
    std::vector<Event> events;
    /// max relative drift of u·c and a·b from their exact values
    double drift = 0;
    bool rejected = false;
};

/// a, b, c, d from u and v = u + 2d through uc = −2λ²k, ab = λ²(1−k²) and
/// (u+d)² = a² + c².
inline fateev::FateevState reconstruct(const fateev::FateevParams& p, double tau, double u,
                                       double v) {
    const double lam2 = p.lambda * p.lambda;
    fateev::FateevState s;
    s.tau = tau;
    s.u = u;
    s.v = v;
    s.c = -2.0 * lam2 * p.k / u;
    s.d = 0.5 * (v - u);
    s.a = std::sqrt(0.25 * (u + v) * (u + v) - s.c * s.c);
    s.b = lam2 * (1.0 - p.k * p.k) / s.a;
    s.xi = fateev::tau_to_xi(p, tau);
    return s;
}

/// Integrates du/dτ = −(u²−u₁²)(u²−u₂²)/u² on the ancient branch u > u₁,
/// carrying δ = u − u₁ so that v stays accurate as u → u₁.
inline FateevTrajectory integrate_fateev_reduced(const fateev::FateevParams& p, double u0,
                                                 const IntegratorOptions& opts) {
    const double U1 = fateev::u1(p), U2 = fateev::u2(p);
    if (!(u0 > U1)) throw BranchError("initial u must exceed u1 = nu/(1-k^2)");
    const auto vsq = [&](double delta) {
        const double u = U1 + delta;
        return delta * (u + U1) * (u * u - U2 * U2) / (u * u);
    };
    const double sign = opts.t_end >= opts.t_start ? 1.0 : -1.0;
    const auto rhs = [&](double, const State<1>& y) {
        return State<1>{-sign * vsq(std::max(y[0], 0.0))};
    };
    IntegratorOptions o = opts;
    o.abs_tol = std::min(opts.abs_tol, 1e-300);
    const RawSolution<1> raw =
        dopri5<1>(rhs, 0.0, State<1>{u0 - U1}, std::fabs(opts.t_end - opts.t_start), o);
    if (raw.stalled) throw StepUnderflow("reduced Fateev integration stalled");

    FateevTrajectory tr;
    tr.params = p;
    const double lam2 = p.lambda * p.lambda;
    for (std::size_t i = 0; i < raw.t.size(); ++i) {
        const double tau = opts.t_start + sign * raw.t[i];
        const double delta = std::max(raw.y[i][0], 0.0);
        const auto s = reconstruct(p, tau, U1 + delta, std::sqrt(vsq(delta)));
        tr.samples.push_back(s);
        const double uc_ref = -2.0 * lam2 * p.k, ab_ref = lam2 * (1.0 - p.k * p.k);
        tr.drift = std::max({tr.drift,
                             std::fabs(s.u * s.c - uc_ref) / (1.0 + std::fabs(uc_ref)),
                             std::fabs(s.a * s.b - ab_ref) / (1.0 + ab_ref)});
    }
    if (sign < 0) std::reverse(tr.samples.begin(), tr.samples.end());
    tr.events.push_back({tr.samples.back().tau, EventKind::SpanEnd, 0.0, {}});
    tr.rejected = tr.drift > opts.drift_bound;
    return tr;
}

/// Integrates the four-variable system (u, a, b, c) of reduced_vector_field
/// and reports the drift of u·c and a·b per unit τ.
inline FateevTrajectory integrate_fateev_full(const fateev::FateevParams& p,
                                              const fateev::FateevState& initial,
                                              const IntegratorOptions& opts) {
    const double sign = opts.t_end >= opts.t_start ? 1.0 : -1.0;
    const auto rhs = [&](double, const State<4>& y) {
        fateev::FateevState s;
        s.u = y[0]; s.a = y[1]; s.b = y[2]; s.c = y[3];
        const auto d = fateev::reduced_vector_field(s);
        return State<4>{sign * d.du, sign * d.da, sign * d.db, sign * d.dc};
    };
    const RawSolution<4> raw = dopri5<4>(rhs, 0.0, State<4>{initial.u, initial.a, initial.b, initial.c},
                                         std::fabs(opts.t_end - opts.t_start), opts);
    if (raw.stalled) throw StepUnderflow("Fateev integration stalled");
    FateevTrajectory tr;
    tr.params = p;
    const double uc0 = initial.u * initial.c, ab0 = initial.a * initial.b;
    double worst = 0;
    for (std::size_t i = 0; i < raw.t.size(); ++i) {
        fateev::FateevState s;
        s.tau = opts.t_start + sign * raw.t[i];
        s.u = raw.y[i][0]; s.a = raw.y[i][1]; s.b = raw.y[i][2]; s.c = raw.y[i][3];
        s.v = (s.a - s.b) * (s.a + s.b) / s.u;
        s.d = 0.5 * (s.v - s.u);
        tr.samples.push_back(s);
        worst = std::max({worst, std::fabs(s.u * s.c - uc0) / (1.0 + std::fabs(uc0)),
                          std::fabs(s.a * s.b - ab0) / (1.0 + std::fabs(ab0))});
    }
    const double span = std::max(1.0, std::fabs(opts.t_end - opts.t_start));
    tr.drift = worst / span;
    if (sign < 0) std::reverse(tr.samples.begin(), tr.samples.end());
    tr.events.push_back({tr.samples.back().tau, EventKind::SpanEnd, 0.0, {}});
    tr.rejected = tr.drift > opts.drift_bound;
    return tr;
}

} // namespace ancient::flow
