#include <gtest/gtest.h>

#include <cmath>

#include "ancient/fateev.hpp"
#include "ancient/geometry_oracle.hpp"
#include "ancient/warped_s3.hpp"

using namespace ancient;
using oracle::ChartMetric;

namespace {

ChartMetric flat() {
    return ChartMetric{[](double, const Vec3&) {
        return Mat3{Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
    }};
}

Mat3 round_metric(double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    return Mat3{Vec3{1, 0, 0}, Vec3{0, c * c, 0}, Vec3{0, 0, s * s}};
}

ChartMetric round_s3(double scale = 1.0) {
    return ChartMetric{[scale](double tau, const Vec3& y) {
        Mat3 g = round_metric(y[0]);
        for (auto& row : g)
            for (auto& x : row) x *= scale * tau;
        return g;
    }};
}

WarpedCoeffs round_coeffs(double t) {
    WarpedCoeffs c;
    c.theta = t;
    c.A = 1;
    c.B = std::cos(t) * std::cos(t);
    c.C = std::sin(t) * std::sin(t);
    c.B1 = -std::sin(2 * t);
    c.C1 = std::sin(2 * t);
    c.B2 = -2 * std::cos(2 * t);
    c.C2 = 2 * std::cos(2 * t);
    return c;
}

double max_rel(const Christoffel& a, const Christoffel& b) {
    return max_abs(a - b) / std::max(1.0, max_abs(b));
}

double max_rel(const Mat3& a, const Mat3& b) {
    return max_abs(a - b) / std::max(1.0, max_abs(b));
}

} // namespace

TEST(NumericalChristoffel, FlatMetricVanishes) {
    const Christoffel g = oracle::numerical_christoffel(flat(), 1.0, {0.7, 0.2, -0.4});
    EXPECT_EQ(max_abs(g), 0.0);
}

TEST(NumericalChristoffel, RoundSphereMatchesClosedForm) {
    const double t = kPi / 4;
    const Christoffel num = oracle::numerical_christoffel(round_s3(), 1.0, {t, 0, 0});
    const Christoffel ref = christoffel_closed(round_coeffs(t));
    EXPECT_LE(max_rel(num, ref), 1e-8);
    EXPECT_NEAR(num[0][1][1], 0.5, 1e-8);
}

TEST(NumericalChristoffel, FateevMatchesClosedForm) {
    const auto p = fateev::FateevParams::make(1.0, 0.3);
    const auto metric = fateev::chart_metric(p);
    const Christoffel num = oracle::numerical_christoffel(metric, 1.0, {0.7, 0, 0});
    const Christoffel ref =
        christoffel_closed(fateev::metric_coeffs(fateev::profile_at_tau(p, 1.0), 0.7));
    EXPECT_LE(max_rel(num, ref), 1e-6);
}

TEST(NumericalChristoffel, SymmetricInLowerIndices) {
    const auto metric = fateev::chart_metric(fateev::FateevParams::make(2.0, -0.5));
    const Christoffel g = oracle::numerical_christoffel(metric, 0.8, {0.4, 0, 0});
    for (int k = 0; k < 3; ++k)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) EXPECT_EQ(g[k][i][j], g[k][j][i]);
}

TEST(NumericalChristoffel, SecondOrderConvergence) {
    const auto p = fateev::FateevParams::make(1.0, 0.3);
    const auto metric = fateev::chart_metric(p);
    const Christoffel ref =
        christoffel_closed(fateev::metric_coeffs(fateev::profile_at_tau(p, 1.0), 0.7));
    const double e1 = max_abs(oracle::numerical_christoffel(metric, 1.0, {0.7, 0, 0},
                                                            oracle::Stencil(1e-2)) - ref);
    const double e2 = max_abs(oracle::numerical_christoffel(metric, 1.0, {0.7, 0, 0},
                                                            oracle::Stencil(5e-3)) - ref);
    EXPECT_GE(e1 / e2, 3.5);
}

TEST(NumericalChristoffel, Errors) {
    EXPECT_THROW(oracle::numerical_christoffel(round_s3(), 1.0, {5e-4, 0, 0}), OutOfChart);
    EXPECT_THROW(oracle::numerical_christoffel(round_s3(), 1.0, {kPi / 2 - 5e-4, 0, 0}),
                 OutOfChart);
    EXPECT_THROW(oracle::numerical_christoffel(round_s3(), 1.0, {0.5, 0, 0},
                                               oracle::Stencil(0.6)),
                 OutOfChart);
    const ChartMetric degenerate{[](double, const Vec3&) {
        return Mat3{Vec3{1, 0, 0}, Vec3{0, 1, 1}, Vec3{0, 1, 1}};
    }};
    EXPECT_THROW(oracle::numerical_christoffel(degenerate, 1.0, {0.5, 0, 0}), SingularMetric);
}

TEST(NumericalRicci, RoundSphereIsEinstein) {
    for (double t : {0.1, 0.3, 0.6, 0.9, 1.2, 1.45}) {
        const Mat3 ric = oracle::numerical_ricci(round_s3(), 1.0, {t, 0, 0});
        const Mat3 g = round_metric(t);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) EXPECT_NEAR(ric[i][j], 2.0 * g[i][j], 1e-6) << t;
    }
}

TEST(NumericalRicci, FlatVanishes) {
    EXPECT_EQ(max_abs(oracle::numerical_ricci(flat(), 1.0, {0.5, 0, 0})), 0.0);
}

TEST(NumericalRicci, FateevMatchesClosedForm) {
    const auto p = fateev::FateevParams::make(1.0, 0.3);
    const Mat3 num = oracle::numerical_ricci(fateev::chart_metric(p), 1.0, {0.7, 0, 0});
    const Mat3 ref =
        ricci_closed(fateev::metric_coeffs(fateev::profile_at_tau(p, 1.0), 0.7)).matrix();
    EXPECT_LE(max_rel(num, ref), 1e-6);
}

TEST(NumericalRicci, BlockStructureAndSymmetry) {
    const auto metric = fateev::chart_metric(fateev::FateevParams::make(0.5, 0.9));
    for (double t : {0.2, 0.7, 1.3}) {
        const Mat3 r = oracle::numerical_ricci(metric, 2.0, {t, 0, 0});
        EXPECT_LE(std::fabs(r[0][1]), 1e-6);
        EXPECT_LE(std::fabs(r[0][2]), 1e-6);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) EXPECT_EQ(r[i][j], r[j][i]);
    }
}

TEST(FlowResidual, ShrinkingSphereIsASolution) {
    // Ric(g_round) = 2 g_round, so g(τ) = τ g_round solves ∂g/∂τ = ½ Ric.
    for (double t : {0.3, 0.8, 1.2})
        EXPECT_LE(oracle::flow_residual(round_s3(), 2.0, {t, 0, 0}), 1e-6);
    EXPECT_GE(oracle::flow_residual(round_s3(4.0), 2.0, {0.8, 0, 0}), 0.1);
}

TEST(FlowResidual, FateevGrid) {
    const auto p = fateev::FateevParams::make(1.0, 0.3);
    const auto metric = fateev::chart_metric(p);
    for (double tau : {0.5, 1.0, 2.0, 5.0})
        for (double t : {0.2, 0.7, 1.2, 1.5})
            EXPECT_LE(oracle::flow_residual(metric, tau, {t, 0, 0}), 1e-5) << tau << " " << t;
}

TEST(FlowResidual, DetectsFrozenMetric) {
    const auto p = fateev::FateevParams::make(1.0, 0.3);
    const auto live = fateev::chart_metric(p);
    const ChartMetric frozen{[live](double, const Vec3& y) { return live(1.0, y); }};
    double worst = 0;
    for (double tau : {0.5, 1.0, 2.0, 5.0})
        for (double t : {0.2, 0.7, 1.2, 1.5})
            worst = std::fmax(worst, oracle::flow_residual(frozen, tau, {t, 0, 0}));
    EXPECT_GE(worst, 1e-2);
}

TEST(FlowResidual, RejectsNonPositiveTimeStencil) {
    EXPECT_THROW(oracle::flow_residual(round_s3(), 1e-5, {0.5, 0, 0}), DomainError);
}
