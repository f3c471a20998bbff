#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ancient/bundle_ode.hpp"
#include "ancient/fateev.hpp"

using namespace ancient;
using namespace ancient::bundle;

namespace {

/// dΛ/dτ along the vector field, by central differences of Λ in (a, b).
double lie_derivative(const FibrationParams& fp, const FlowState& s) {
    const Derivative d = vector_field(fp, s);
    const double h = 1e-6;
    const auto L = [&](double a, double b) { return first_integral(fp, {0, a, b}).value; };
    const double La = (L(s.a * (1 + h), s.b) - L(s.a * (1 - h), s.b)) / (2 * h * s.a);
    const double Lb = (L(s.a, s.b * (1 + h)) - L(s.a, s.b * (1 - h))) / (2 * h * s.b);
    return La * d.da + Lb * d.db;
}

double near_tol(double ref, double rel) { return rel * std::max(1.0, std::fabs(ref)); }

} // namespace

TEST(VectorField, Examples) {
    const auto hopf = make_u1(1, 4, -1);
    const Derivative d = vector_field(hopf, 16.0, 4.0);
    EXPECT_DOUBLE_EQ(d.da, 16.0);
    EXPECT_DOUBLE_EQ(d.db, 4.0);

    const auto ex1 = make_submersion(6, 2, 12);
    const Derivative e = vector_field(ex1, 3.0, 3.0);
    EXPECT_DOUBLE_EQ(e.da, 12.0);
    EXPECT_DOUBLE_EQ(e.db, 12.0);

    const auto su2 = make_su2(2, 1.0, 1.0 / 8);
    const auto c = qk_constants(2, 1.0, 1.0 / 8);
    EXPECT_NEAR(ratio_rate(su2, {0, c.r2 * 3.0, 3.0}), 0.0, 1e-13);
    EXPECT_NEAR(ratio_rate(su2, {0, c.r1 * 3.0, 3.0}), 0.0, 1e-12);
}

TEST(VectorField, RatioEquationSU2) {
    const auto fp = make_su2(3, 2.0, 0.2);
    for (double y : {0.1, 1.0, 5.0}) {
        const double b = 1.7;
        const double expect = (4 - 2 * 2.0 * y + 9 * 0.04 * y * y) / b;
        EXPECT_NEAR(ratio_rate(fp, {0, y * b, b}), expect, 1e-13);
    }
}

TEST(VectorField, RatioEquationSubmersion) {
    const auto fp = make_submersion(14, 6, 28);
    const auto c = submersion_constants(14, 6, 28);
    for (double y : {0.1, 0.5, 2.0}) {
        const double b = 0.8;
        const double expect = 2 * (28 - 6) / b * (y - c.Lambda1) * (y - 1);
        EXPECT_NEAR(ratio_rate(fp, {0, y * b, b}), expect, 1e-12);
    }
}

TEST(FirstIntegral, ConservedByVectorField) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> sc(0.3, 5.0), yy(0.05, 6.0);
    const std::vector<FibrationParams> systems = {
        make_u1(1, 4, -1), make_u1(7, 16, -1), make_u1(3, 2.5, 0.7),
        make_su2(2, 1.0, 1.0 / 8), make_su2(4, 24, 2), make_submersion(6, 2, 12),
        make_submersion(14, 6, 28), make_submersion(8, 4, 12)};
    for (const auto& fp : systems) {
        const auto roots = einstein_ratios(fp);
        for (int i = 0; i < 50; ++i) {
            const double b = sc(rng), y = yy(rng);
            bool near_root = false;
            for (double r : roots) near_root |= std::fabs(y - r) < 0.05 * std::max(1.0, r);
            if (near_root) continue;
            const FlowState s{0, y * b, b};
            const double L = first_integral(fp, s).value;
            const Derivative d = vector_field(fp, s);
            const double scale = std::fabs(L) * (std::fabs(d.da) / s.a + std::fabs(d.db) / s.b) + 1e-12;
            EXPECT_LE(std::fabs(lie_derivative(fp, s)) / scale, 1e-6) << variant_name(fp) << " y=" << y;
        }
    }
}

TEST(FirstIntegral, VanishesOnRays) {
    const std::vector<FibrationParams> systems = {make_u1(1, 4, -1), make_su2(2, 1.0, 1.0 / 8),
                                                  make_submersion(6, 2, 12)};
    for (const auto& fp : systems)
        for (const auto& ray : einstein_rays(fp)) {
            const auto fi = first_integral(fp, ray.at(2.0));
            EXPECT_TRUE(fi.on_separatrix);
            EXPECT_EQ(fi.value, 0.0);
        }
}

TEST(FirstIntegral, U1SignedBranch) {
    const auto fp = make_u1(2, 6, -1);
    const double ystar = einstein_ratios(fp)[0];
    EXPECT_GT(first_integral(fp, {0, 0.5 * ystar, 1}).value, 0.0);
    EXPECT_LT(first_integral(fp, {0, 2.0 * ystar, 1}).value, 0.0);
}

TEST(U1Explicit, ChainRuleAgainstVectorField) {
    for (auto [p, q] : {std::pair{4.0, -1.0}, std::pair{3.0, 0.5}})
        for (double nu : {0.5, 2.0})
            for (double xi : {0.5, 1.0, 2.0}) {
                const auto fp = make_u1(1, p, q);
                const double h = 1e-5;
                const auto sp = u1_explicit_m1(p, q, nu, xi + h), sm = u1_explicit_m1(p, q, nu, xi - h);
                const auto s = u1_explicit_m1(p, q, nu, xi);
                const double dt = sp.tau - sm.tau;
                const Derivative d = vector_field(fp, s);
                EXPECT_NEAR((sp.a - sm.a) / dt, d.da, near_tol(d.da, 1e-8));
                EXPECT_NEAR((sp.b - sm.b) / dt, d.db, near_tol(d.db, 1e-8));
            }
}

TEST(U1Explicit, FirstIntegralConstantAndFiberBounded) {
    const double p = 4, q = -1, nu = 1.3;
    const auto fp = make_u1(1, p, q);
    const double L0 = first_integral(fp, u1_explicit_m1(p, q, nu, 0.3)).value;
    for (double xi : {0.5, 1.0, 2.0, 5.0, 10.0})
        EXPECT_NEAR(first_integral(fp, u1_explicit_m1(p, q, nu, xi)).value, L0, 1e-10 * std::fabs(L0));
    EXPECT_NEAR(u1_explicit_m1(p, q, nu, 30.0).a, 1.0 / nu, 1e-15);
    // The fiber cap predicted by the first integral: a → y*^{m/(m+1)}/Λ.
    const double ystar = einstein_ratios(fp)[0];
    EXPECT_NEAR(std::sqrt(ystar) / L0, 1.0 / nu, 1e-12);
}

TEST(U1Explicit, MatchesOmegaFamilyHopfScales) {
    // With Ω = 2ν the Ω-family is 4 times the U(1) metric at τ_Ω = 16 τ
    // (fiber normalised as ψ₃²/4, base as ψ₁² + ψ₂²).
    const double nu = 0.7;
    for (double xi : {0.2, 1.0, 3.0}) {
        const auto s = u1_explicit_m1(4, -1, nu, xi);
        const auto h = fateev::omega_hopf_scales(2 * nu, xi);
        EXPECT_NEAR(h.fiber, s.a, 1e-14 * h.fiber);
        EXPECT_NEAR(h.base, 4 * s.b, 1e-13 * h.base);
        EXPECT_NEAR(fateev::omega_tau(2 * nu, xi), 16 * s.tau, 1e-13 * s.tau * 16);
    }
}

TEST(EinsteinRays, Values) {
    const auto hopf = einstein_rays(make_u1(1, 4, -1));
    ASSERT_EQ(hopf.size(), 1u);
    EXPECT_DOUBLE_EQ(hopf[0].ratio, 4.0);
    EXPECT_DOUBLE_EQ(hopf[0].slope_a, 16.0);
    EXPECT_DOUBLE_EQ(hopf[0].slope_b, 4.0);

    const auto oct = einstein_rays(make_submersion(14, 6, 28));
    ASSERT_EQ(oct.size(), 2u);
    EXPECT_DOUBLE_EQ(oct[0].ratio, 1.0);
    EXPECT_NEAR(oct[1].ratio, 3.0 / 11.0, 1e-15);
    EXPECT_NEAR(oct[1].slope_b, 2.0 * 266.0 / 11.0, 1e-12);
}

TEST(EinsteinRays, SlopesAreFixedPoints) {
    const std::vector<FibrationParams> systems = {
        make_u1(1, 4, -1), make_u1(5, 12, 0.3), make_su2(2, 1.0, 1.0 / 8), make_su2(3, 20, 2),
        make_submersion(6, 2, 12), make_submersion(14, 6, 28), make_submersion(14, 2, 20)};
    for (const auto& fp : systems)
        for (const auto& ray : einstein_rays(fp)) {
            EXPECT_NEAR(ray.slope_a / ray.slope_b, ray.ratio, 1e-12 * ray.ratio);
            for (double tau : {0.5, 3.0}) {
                const Derivative d = vector_field(fp, ray.at(tau));
                EXPECT_NEAR(d.da, ray.slope_a, 1e-12 * std::fabs(ray.slope_a));
                EXPECT_NEAR(d.db, ray.slope_b, 1e-12 * std::fabs(ray.slope_b));
            }
        }
}

TEST(QKConstants, SimpleCase) {
    for (double p : {1.0, 8.0, 24.0}) {
        const auto c = qk_constants(2, p, p / 8);
        EXPECT_NEAR(c.r1, 16 / p, 1e-13 * 16 / p);
        EXPECT_NEAR(c.r2, 16 / (7 * p), 1e-13 * 16 / p);
        EXPECT_NEAR(c.A, 5.0 / 6.0, 1e-13);
        EXPECT_NEAR(c.B, 53.0 / 42.0, 1e-13);
        const auto d = qk_constants(1, p, p / 6);
        EXPECT_NEAR(d.r1, 12 / p, 1e-13 * 12 / p);
        EXPECT_NEAR(d.r2, 12 / (5 * p), 1e-13 * 12 / p);
        EXPECT_NEAR(d.A, 0.75, 1e-13);
        EXPECT_NEAR(d.B, 27.0 / 20.0, 1e-13);
    }
}

TEST(QKConstants, PartialFractionsAndOrdering) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> yy(-3.0, 30.0);
    for (int m : {2, 3, 6}) {
        const double p = 4.0 * m + 8, q = 2.0;
        const auto c = qk_constants(m, p, q);
        EXPECT_GT(c.r1, c.r2);
        EXPECT_GT(c.B, c.A);
        for (int i = 0; i < 100; ++i) {
            const double y = yy(rng);
            if (std::fabs(y - c.r1) < 1e-3 || std::fabs(y - c.r2) < 1e-3) continue;
            const double lhs = (2 * p - 3 * q * q * y) / (4 - 2 * p * y + (2 * m + 3) * q * q * y * y);
            const double rhs = c.A / (y - c.r1) - c.B / (y - c.r2);
            EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::fabs(lhs)));
        }
    }
    EXPECT_THROW(qk_constants(2, 1.0, 1.0), ComplexRoots);
    EXPECT_THROW(make_su2(2, 1.0, 1.0), ComplexRoots);
}

TEST(SubmersionConstants, Examples) {
    const auto e1 = submersion_constants(6, 2, 12);
    EXPECT_NEAR(e1.Lambda1, 0.2, 1e-15);
    EXPECT_NEAR(e1.Lambda2, 10.8, 1e-13);
    const auto e2 = submersion_constants(8, 4, 12);
    EXPECT_NEAR(e2.Lambda1, 0.5, 1e-15);
    EXPECT_NEAR(e2.Lambda2, 10.0, 1e-13);
    const auto e3 = submersion_constants(14, 6, 28);
    EXPECT_NEAR(e3.Lambda1, 3.0 / 11.0, 1e-15);
    EXPECT_NEAR(e3.Lambda2, 266.0 / 11.0, 1e-13);
    EXPECT_TRUE(e3.connector_hypothesis);
    const auto q3 = submersion_constants(14, 2, 20);
    EXPECT_NEAR(q3.Lambda1, 1.0 / 9.0, 1e-15);
    EXPECT_NEAR(q3.Lambda2, 348.0 / 18.0, 1e-13);
}

TEST(Construction, Validation) {
    EXPECT_THROW(make_u1(0, 1, 1), InvalidParams);
    EXPECT_THROW(make_u1(1, -1, 1), InvalidParams);
    EXPECT_THROW(make_u1(1, 1, 0), InvalidParams);
    EXPECT_THROW(make_su2(1, 12, 2), InvalidParams);
    EXPECT_THROW(make_submersion(6, 7, 12), InvalidParams);
    EXPECT_THROW(make_submersion(13, 2, 12), InvalidParams);
    EXPECT_THROW(make_submersion(5, 4, 8), InvalidParams);  // λ̌ = 2λ̂
}

TEST(Spectrum, CPmValues) {
    const auto s = curvature_spectrum_u1_cpm(1, 4, 1, 1, 1);
    EXPECT_NEAR(s.entries[0].value, 13.0 / 4.0, 1e-15);
    EXPECT_EQ(s.entries[1].multiplicity, 0);
    EXPECT_NEAR(s.entries[2].value, 0.25, 1e-15);
    EXPECT_EQ(s.entries[2].multiplicity, 2);
    EXPECT_EQ(s.total_multiplicity(), 3);
    for (int m = 1; m <= 8; ++m)
        EXPECT_EQ(curvature_spectrum_u1_cpm(m, 1, 1, 1, 1).total_multiplicity(),
                  (2 * m + 1) * (2 * m) / 2);
}

TEST(Spectrum, PositivityThreshold) {
    for (auto [m, p, q] : {std::tuple{1, 4.0, -1.0}, std::tuple{7, 16.0, -1.0}, std::tuple{3, 2.0, 0.4}}) {
        const double yc = u1_positivity_threshold(m, p, q);
        const double b = 2.0;
        const auto below = curvature_spectrum_u1_cpm(m, p, q, (1 - 1e-9) * yc * b, b);
        const auto above = curvature_spectrum_u1_cpm(m, p, q, (1 + 1e-9) * yc * b, b);
        EXPECT_TRUE(below.positive());
        EXPECT_FALSE(above.positive());
        EXPECT_NEAR(curvature_spectrum_u1_cpm(m, p, q, yc * b, b).entries[0].value, 0.0, 1e-14);
    }
    EXPECT_NEAR(u1_positivity_threshold(1, 4, 1), 16.0 / 3.0, 1e-15);
    EXPECT_NEAR(u1_positivity_threshold(7, 16, 1), 64.0 / 15.0, 1e-15);
    const auto tiny = curvature_spectrum_u1_cpm(3, 8, -1, 1e-12, 1.0);
    EXPECT_TRUE(tiny.positive());
    EXPECT_NEAR(tiny.entries[0].value, 8.0, 1e-9);
    EXPECT_NEAR(tiny.entries[1].value, 2.0, 1e-9);
}

TEST(Presets, Catalog) {
    const auto oct = std::get<Submersion>(preset("octonionic"));
    EXPECT_EQ(oct.lambda, 14);
    EXPECT_EQ(oct.lambda_hat, 6);
    EXPECT_EQ(oct.lambda_check, 28);
    const auto h7 = std::get<U1Bundle>(preset("hopf_u1(7)"));
    EXPECT_EQ(h7.m, 7);
    EXPECT_EQ(h7.p, 16);
    EXPECT_EQ(h7.q, -1);
    const auto q3 = std::get<Submersion>(preset("quaternionic_submersion(3)"));
    EXPECT_EQ(q3.lambda, 14);
    EXPECT_EQ(q3.lambda_hat, 2);
    EXPECT_EQ(q3.lambda_check, 20);
    const auto su = std::get<SU2Bundle>(preset("hopf_su2_qk(2)"));
    EXPECT_EQ(su.p, 16);
    EXPECT_EQ(su.q, 2);
    const auto tw = std::get<Submersion>(preset("twistor(2)"));
    const auto cp = std::get<Submersion>(preset("cp_odd_submersion(2)"));
    EXPECT_EQ(tw.lambda, cp.lambda);
    EXPECT_EQ(tw.lambda_check, cp.lambda_check);
    EXPECT_EQ(tw.lambda_hat, 4);

    EXPECT_THROW(preset("klein_bottle"), UnknownPreset);
    EXPECT_THROW(preset("hopf_u1"), UnknownPreset);
    EXPECT_THROW(preset("octonionic(2)"), UnknownPreset);
    EXPECT_THROW(preset("hopf_su2_qk(1)"), InvalidParams);

    const auto js = catalog_json();
    EXPECT_EQ(js.size(), preset_catalog().size());
    for (const auto& e : js) {
        EXPECT_TRUE(e.contains("name"));
        EXPECT_TRUE(e.contains("variant"));
        EXPECT_TRUE(e.contains("example"));
    }
}
