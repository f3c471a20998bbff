#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ancient/flow_integrator.hpp"

using namespace ancient;
using namespace ancient::bundle;
using namespace ancient::flow;

namespace {

IntegratorOptions span(double t0, double t1) {
    IntegratorOptions o;
    o.t_start = t0;
    o.t_end = t1;
    return o;
}

double rel(double x, double ref) { return std::fabs(x - ref) / std::max(1.0, std::fabs(ref)); }

} // namespace

TEST(Dopri5, ExponentialAndOscillator) {
    IntegratorOptions o;
    const auto sol = dopri5<1>([](double, const State<1>& y) { return State<1>{y[0]}; }, 0.0,
                               State<1>{1.0}, 3.0, o);
    EXPECT_NEAR(sol.y.back()[0], std::exp(3.0), 1e-9 * std::exp(3.0));
    const auto osc = dopri5<2>(
        [](double, const State<2>& y) { return State<2>{y[1], -y[0]}; }, 0.0, State<2>{1.0, 0.0},
        -10.0, o);
    EXPECT_NEAR(osc.y.back()[0], std::cos(10.0), 1e-9);
    EXPECT_NEAR(osc.y.back()[1], std::sin(10.0), 1e-9);
    for (const auto& seg : osc.dense) {
        const double mid = seg.t + 0.37 * seg.h;
        EXPECT_NEAR(seg.eval(mid)[0], std::cos(mid), 1e-8);
    }
}

TEST(Dopri5, FifthOrderOnClosedForm) {
    // Fixed steps: tolerances too loose to reject, step capped by max_step.
    const double p = 4, q = -1, nu = 1;
    const auto fp = make_u1(1, p, q);
    const auto s0 = u1_explicit_m1(p, q, nu, 0.5);
    const auto s1 = u1_explicit_m1(p, q, nu, 1.5);
    const auto err_at = [&](double h) {
        IntegratorOptions o = span(s0.tau, s1.tau);
        o.rel_tol = o.abs_tol = 1.0;
        o.max_step = h;
        const auto sol = dopri5<2>(
            [&](double, const State<2>& y) {
                const auto d = vector_field(fp, y[0], y[1]);
                return State<2>{d.da, d.db};
            },
            s0.tau, State<2>{s0.a, s0.b}, s1.tau, o);
        return std::hypot(sol.y.back()[0] - s1.a, sol.y.back()[1] - s1.b);
    };
    const double span_len = s1.tau - s0.tau;
    const double e1 = err_at(span_len / 20), e2 = err_at(span_len / 40), e3 = err_at(span_len / 80);
    EXPECT_GT(e1 / e2, 20.0);
    EXPECT_LT(e1 / e2, 50.0);
    EXPECT_GT(e2 / e3, 20.0);
    EXPECT_LT(e2 / e3, 50.0);
}

TEST(Dopri5, InvalidOptions) {
    IntegratorOptions o;
    o.rel_tol = 0;
    EXPECT_THROW(o.validate(), InvalidParams);
    EXPECT_THROW(integrate(make_u1(1, 4, -1), {1, 16, 4}, o), InvalidParams);
    EXPECT_THROW(integrate(make_u1(1, 4, -1), {1, -1, 4}, span(1, 10)), DomainError);
}

TEST(Integrate, StaysOnEinsteinRay) {
    const auto tr = integrate(make_u1(1, 4, -1), {1, 16, 4}, span(1, 10));
    EXPECT_NEAR(tr.samples.back().a, 160.0, 1e-8);
    EXPECT_NEAR(tr.samples.back().b, 40.0, 1e-8);
    for (const auto& s : tr.samples) EXPECT_NEAR(s.y(), 4.0, 1e-12);
    EXPECT_EQ(tr.drift, 0.0);
    EXPECT_FALSE(tr.rejected);
    ASSERT_EQ(tr.events.size(), 1u);
    EXPECT_EQ(tr.events[0].kind, EventKind::SpanEnd);
}

TEST(Integrate, SamplesIncreasingForBothDirections) {
    const auto fp = make_submersion(6, 2, 12);
    for (double t1 : {20.0, 0.2}) {
        const auto tr = integrate(fp, {1, 0.6, 1.0}, span(1, t1));
        for (std::size_t i = 1; i < tr.samples.size(); ++i)
            EXPECT_GT(tr.samples[i].tau, tr.samples[i - 1].tau);
        for (std::size_t i = 1; i < tr.dense.size(); ++i)
            EXPECT_LE(std::min(tr.dense[i - 1].t, tr.dense[i - 1].t + tr.dense[i - 1].h),
                      std::min(tr.dense[i].t, tr.dense[i].t + tr.dense[i].h));
    }
}

TEST(Integrate, U1MatchesClosedForm) {
    for (double nu : {0.5, 1.0, 2.0}) {
        const double p = 4, q = -1;
        const auto fp = make_u1(1, p, q);
        const auto s0 = u1_explicit_m1(p, q, nu, 0.1);
        const auto s1 = u1_explicit_m1(p, q, nu, 5.0);
        const auto tr = integrate(fp, s0, span(s0.tau, s1.tau));
        for (double xi = 0.1; xi <= 5.0; xi += 0.1) {
            const auto ex = u1_explicit_m1(p, q, nu, xi);
            const auto num = tr.at(std::clamp(ex.tau, tr.tau_min(), tr.tau_max()));
            EXPECT_LE(rel(num.a, ex.a), 1e-6);
            EXPECT_LE(rel(num.b, ex.b) , 1e-6 * std::max(1.0, ex.b));
        }
        EXPECT_LE(tr.drift, 1e-8);
    }
}

TEST(Integrate, U1CapAndBaseGrowth) {
    const auto fp = make_u1(1, 4, -1);
    const FlowState init{1, 1.0, 1.0};  // y < y* = 4, Λ > 0
    const double L = first_integral(fp, init).value;
    ASSERT_GT(L, 0.0);
    const auto tr = integrate(fp, init, span(1, 1e5));
    const double cap = std::sqrt(4.0) / L;
    EXPECT_NEAR(tr.samples.back().a, cap, 1e-3 * cap);
    for (const auto& s : tr.samples) {
        EXPECT_LT(s.a, cap * (1 + 1e-9));
        EXPECT_GE(vector_field(fp, s).db, 2.0 * 1 * 4 / 2 - 1e-9);
    }
}

TEST(Integrate, SU2BackwardFiberVanish) {
    const auto fp = make_su2(2, 1.0, 1.0 / 8);
    const auto tr = integrate(fp, {1, 0.5, 1.0}, span(1, -100));
    ASSERT_TRUE(tr.has_event(EventKind::FiberVanish));
    const Event* e = tr.first_event(EventKind::FiberVanish);
    EXPECT_GT(e->tau, -100.0);
    EXPECT_LT(e->tau, 1.0);
    EXPECT_LE(e->state.a, 1e-8);
    EXPECT_GE(e->state.b, 0.1);
    EXPECT_TRUE(tr.backward);
    EXPECT_NEAR(tr.tau_min(), e->tau, 1e-12);
}

TEST(Integrate, EventTimeAccuracy) {
    // Ratio crossings of the explicit U(1) solution: y(ξ) = (p/q²)/cosh²ξ.
    const double p = 4, q = -1, nu = 1;
    const auto fp = make_u1(1, p, q);
    const auto s0 = u1_explicit_m1(p, q, nu, 0.3);
    IntegratorOptions o = span(s0.tau, 50);
    o.ratio_crossings = {2.0, 0.5};
    const auto tr = integrate(fp, s0, o);
    std::vector<const Event*> cross;
    for (const auto& e : tr.events)
        if (e.kind == EventKind::RatioCross) cross.push_back(&e);
    ASSERT_EQ(cross.size(), 2u);
    for (const Event* e : cross) {
        const double xi = std::acosh(std::sqrt(p / (q * q) / e->value));
        const double tau = u1_explicit_m1(p, q, nu, xi).tau;
        EXPECT_NEAR(e->tau, tau, 2e-9 * std::max(1.0, tau));
        EXPECT_NEAR(e->state.y(), e->value, 1e-9);
    }
    EXPECT_LT(cross[0]->tau, cross[1]->tau);
}

TEST(Integrate, FiberVanishTimeConvergesWithEventTol) {
    const auto fp = make_su2(2, 1.0, 1.0 / 8);
    IntegratorOptions o = span(1, -100);
    const auto t_default = integrate(fp, {1, 0.5, 1.0}, o).first_event(EventKind::FiberVanish)->tau;
    o.event_tol = 1e-13;
    o.rel_tol = 1e-13;
    const auto t_fine = integrate(fp, {1, 0.5, 1.0}, o).first_event(EventKind::FiberVanish)->tau;
    EXPECT_NEAR(t_default, t_fine, 1e-8);
}

TEST(Integrate, ForwardBackwardRoundTrip) {
    const std::vector<std::pair<FibrationParams, FlowState>> cases = {
        {make_u1(1, 4, -1), {1, 1, 1}},
        {make_su2(2, 1.0, 1.0 / 8), {1, 5, 1}},
        {make_submersion(14, 6, 28), {1, 0.5, 1}}};
    for (const auto& [fp, s] : cases) {
        const auto fwd = integrate(fp, s, span(1, 10));
        const auto end = fwd.samples.back();
        const auto back = integrate(fp, end, span(10, 1));
        const auto r = back.samples.front();
        EXPECT_NEAR(r.tau, 1.0, 1e-14);
        EXPECT_LE(rel(r.a, s.a), 1e-7);
        EXPECT_LE(rel(r.b, s.b), 1e-7);
    }
}

TEST(Integrate, ConservationOnAllSystems) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> lb(-1.0, 1.0);
    const std::vector<FibrationParams> systems = {make_u1(1, 4, -1), make_u1(7, 16, -1),
                                                  make_su2(2, 1.0, 1.0 / 8),
                                                  make_submersion(6, 2, 12),
                                                  make_submersion(14, 6, 28)};
    IntegratorOptions o = span(1, 11);
    o.rel_tol = 1e-10;
    o.abs_tol = 1e-10;
    for (const auto& fp : systems)
        for (int i = 0; i < 20; ++i) {
            const double b = std::exp(lb(rng));
            const double y = std::exp(2.0 * lb(rng)) * einstein_ratios(fp).front();
            // The first integral is ill-conditioned next to a ray.
            bool near_ray = false;
            for (double r : einstein_ratios(fp)) near_ray |= std::fabs(y - r) < 0.5 * r;
            if (near_ray) continue;
            const auto tr = integrate(fp, {1, y * b, b}, o);
            EXPECT_LE(tr.drift, 1e-8) << variant_name(fp) << " y0=" << y << " b0=" << b;
            EXPECT_FALSE(tr.rejected);
        }
}

TEST(Integrate, LooseTolerancesAreRejected) {
    const auto fp = make_submersion(6, 2, 12);
    IntegratorOptions o = span(1, 11);
    o.rel_tol = o.abs_tol = 1e-4;
    const auto loose = integrate(fp, {1, 0.6, 1.0}, o);
    o.rel_tol = o.abs_tol = 1e-10;
    const auto tight = integrate(fp, {1, 0.6, 1.0}, o);
    EXPECT_GT(loose.drift, 1e-6);
    EXPECT_TRUE(loose.rejected);
    EXPECT_GT(loose.drift, 100 * tight.drift);
}

TEST(Integrate, ScalingEquivariance) {
    // (a, b)(τ) solves the system iff (c·a, c·b)(c·τ) does.
    const auto fp = make_submersion(14, 6, 28);
    const auto tr = integrate(fp, {1, 0.5, 1}, span(1, 5));
    const double c = 3.0;
    const auto sc = integrate(fp, {c, c * 0.5, c}, span(c, 5 * c));
    EXPECT_LE(rel(sc.samples.back().a, c * tr.samples.back().a), 1e-9);
    EXPECT_LE(rel(sc.samples.back().b, c * tr.samples.back().b), 1e-9);
}

TEST(MonitorInvariant, ExactRayAndGenericSamples) {
    const auto fp = make_u1(1, 4, -1);
    const auto ray = einstein_rays(fp)[0];
    std::vector<FlowState> on_ray;
    for (double t : {1.0, 2.0, 5.0}) on_ray.push_back(ray.at(t));
    const auto integral = [&](const FlowState& s) { return first_integral(fp, s).value; };
    EXPECT_EQ(monitor_invariant(on_ray, integral), 0.0);
    std::vector<FlowState> off = {{1, 1, 1}, {2, 1, 2}};
    const double L0 = integral(off[0]), L1 = integral(off[1]);
    EXPECT_NEAR(monitor_invariant(off, integral), std::fabs(L1 - L0) / (1 + std::fabs(L0)), 1e-15);
}

TEST(FateevReduced, MatchesProfile) {
    for (auto [nu, k] : {std::pair{1.0, 0.0}, std::pair{1.0, 0.3}, std::pair{2.0, -0.5},
                         std::pair{0.5, 0.9}}) {
        const auto p = fateev::FateevParams::make(nu, k);
        const auto s0 = fateev::profile_at_tau(p, 1.0);
        IntegratorOptions o = span(1.0, 6.0);
        const auto tr = integrate_fateev_reduced(p, s0.u, o);
        for (const auto& s : tr.samples) {
            const auto ex = fateev::profile_at_tau(p, s.tau);
            EXPECT_LE(rel(s.u, ex.u), 1e-7);
            EXPECT_LE(rel(s.a, ex.a), 1e-7);
            EXPECT_LE(rel(s.b, ex.b), 1e-7);
            EXPECT_LE(rel(s.c, ex.c), 1e-7);
            EXPECT_LE(rel(s.d, ex.d), 1e-7);
        }
        EXPECT_LE(tr.drift, 1e-8);
    }
}

TEST(FateevReduced, TendsToU1AndKZero) {
    const auto p = fateev::FateevParams::make(1.0, 0.5);
    const auto tr = integrate_fateev_reduced(p, 3.0, span(1, 200));
    EXPECT_NEAR(tr.samples.back().u, fateev::u1(p), 1e-10);
    const auto p0 = fateev::FateevParams::make(1.5, 0.0);
    const auto tr0 = integrate_fateev_reduced(p0, 4.0, span(1, 20));
    for (const auto& s : tr0.samples) EXPECT_EQ(s.c, 0.0);
    EXPECT_THROW(integrate_fateev_reduced(p, fateev::u1(p), span(1, 2)), BranchError);
}

TEST(FateevFull, ConservedProductsDrift) {
    for (auto [nu, k] : {std::pair{1.0, 0.3}, std::pair{2.0, -0.5}, std::pair{0.5, 0.9}}) {
        const auto p = fateev::FateevParams::make(nu, k);
        const auto s0 = fateev::profile_at_tau(p, 1.0);
        const auto tr = integrate_fateev_full(p, s0, span(1, 11));
        EXPECT_LE(tr.drift, 1e-8);
        const auto ex = fateev::profile_at_tau(p, 11.0);
        EXPECT_LE(rel(tr.samples.back().a, ex.a), 1e-8);
        EXPECT_LE(rel(tr.samples.back().b, ex.b), 1e-8);
    }
}
