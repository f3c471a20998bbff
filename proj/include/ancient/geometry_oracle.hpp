#pragma once

// Brute-force differential geometry on the (θ, χ₁, χ₂) chart.
//
// Everything here works from sampled metric components only: Christoffel
// symbols and Ricci tensors come from central differences, never from the
// closed forms in warped_s3.hpp. That independence is what makes these
// routines usable as an oracle for the closed forms.

#include <cmath>
#include <functional>
#include <string>

#include "ancient/errors.hpp"
#include "ancient/tensor.hpp"

namespace ancient::oracle {

/// A time-dependent metric in coordinates y = (θ, χ₁, χ₂).
struct ChartMetric {
    std::function<Mat3(double tau, const Vec3& y)> eval;

    Mat3 operator()(double tau, const Vec3& y) const { return eval(tau, y); }
};

/// Central-difference steps per coordinate direction.
struct Stencil {
    double theta = 1e-4;
    double chi = 1e-3;

    Stencil() = default;
    Stencil(double h_theta, double h_chi) : theta(h_theta), chi(h_chi) {}
    explicit Stencil(double h) : theta(h), chi(h) {}

    double step(std::size_t dir) const { return dir == 0 ? theta : chi; }
};

/// Points closer than this to θ = 0 or θ = π/2 are outside the chart.
inline constexpr double kChartGuard = 1e-3;

namespace detail {

inline void check_chart(const Vec3& y, double reach) {
    const double th = y[0];
    if (!(th > kChartGuard && th < kPi / 2 - kChartGuard))
        throw OutOfChart("theta=" + std::to_string(th) + " is within the pole guard");
    if (th - reach <= 0.0 || th + reach >= kPi / 2)
        throw OutOfChart("finite-difference stencil leaves (0, pi/2) at theta=" +
                         std::to_string(th));
}

inline Mat3 checked_inverse(const Mat3& g) {
    const double det = det3(g);
    const double scale = (g[0][0] + g[1][1] + g[2][2]) / 3.0;
    if (!(std::fabs(det) >= 1e-12 * std::fabs(scale * scale * scale)) || det == 0.0)
        throw SingularMetric("metric determinant " + std::to_string(det) +
                             " below threshold");
    return inverse3(g, det);
}

inline Vec3 shifted(Vec3 y, std::size_t dir, double delta) {
    y[dir] += delta;
    return y;
}

inline Christoffel christoffel_unchecked(const ChartMetric& metric, double tau,
                                         const Vec3& y, const Stencil& h) {
    const Mat3 g = metric(tau, y);
    const Mat3 ginv = checked_inverse(g);

    // dg[l] = ∂_l g
    std::array<Mat3, 3> dg{};
    for (std::size_t l = 0; l < 3; ++l) {
        const double s = h.step(l);
        const Mat3 gp = metric(tau, shifted(y, l, s));
        const Mat3 gm = metric(tau, shifted(y, l, -s));
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                dg[l][i][j] = (gp[i][j] - gm[i][j]) / (2.0 * s);
    }

    Christoffel gamma{};
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = i; j < 3; ++j) {
                double acc = 0.0;
                for (std::size_t l = 0; l < 3; ++l)
                    acc += ginv[k][l] * (dg[i][j][l] + dg[j][i][l] - dg[l][i][j]);
                gamma[k][i][j] = 0.5 * acc;
                gamma[k][j][i] = 0.5 * acc;
            }
    return gamma;
}

} // namespace detail

/// Γᵏᵢⱼ = ½ gᵏˡ(∂ᵢg_jl + ∂ⱼg_il − ∂ₗg_ij) with O(h²) central differences.
inline Christoffel numerical_christoffel(const ChartMetric& metric, double tau,
                                         const Vec3& y, const Stencil& h = {}) {
    detail::check_chart(y, h.theta);
    return detail::christoffel_unchecked(metric, tau, y, h);
}

namespace detail {

inline Mat3 ricci_at_step(const ChartMetric& metric, double tau, const Vec3& y,
                          const Stencil& h) {
    const Christoffel gamma = christoffel_unchecked(metric, tau, y, h);

    // dgamma[l] = ∂_l Γ
    std::array<Christoffel, 3> dgamma{};
    for (std::size_t l = 0; l < 3; ++l) {
        const double s = h.step(l);
        const Christoffel gp = christoffel_unchecked(metric, tau, shifted(y, l, s), h);
        const Christoffel gm = christoffel_unchecked(metric, tau, shifted(y, l, -s), h);
        for (std::size_t k = 0; k < 3; ++k)
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t j = 0; j < 3; ++j)
                    dgamma[l][k][i][j] = (gp[k][i][j] - gm[k][i][j]) / (2.0 * s);
    }

    Mat3 ric{};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < 3; ++t) {
                acc += dgamma[t][t][i][j] - dgamma[j][t][i][t];
                for (std::size_t s = 0; s < 3; ++s)
                    acc += gamma[s][i][j] * gamma[t][s][t] - gamma[s][i][t] * gamma[t][s][j];
            }
            ric[i][j] = acc;
        }
    return ric;
}

} // namespace detail

/// R_ij = ∂ₜΓᵗᵢⱼ − ∂ⱼΓᵗᵢₜ + ΓˢᵢⱼΓᵗₛₜ − ΓˢᵢₜΓᵗₛⱼ, derivatives of Γ by nested
/// central differences at steps h and h/2 combined by Richardson
/// extrapolation. The result is symmetrized.
inline Mat3 numerical_ricci(const ChartMetric& metric, double tau, const Vec3& y,
                            const Stencil& h = {}) {
    detail::check_chart(y, 2.0 * h.theta);
    const Mat3 coarse = detail::ricci_at_step(metric, tau, y, h);
    const Mat3 fine =
        detail::ricci_at_step(metric, tau, y, Stencil(0.5 * h.theta, 0.5 * h.chi));
    Mat3 ric{};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) ric[i][j] = (4.0 * fine[i][j] - coarse[i][j]) / 3.0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i + 1; j < 3; ++j) {
            const double m = 0.5 * (ric[i][j] + ric[j][i]);
            ric[i][j] = m;
            ric[j][i] = m;
        }
    return ric;
}

/// max_ij |∂g_ij/∂τ − ½ R_ij| / (1 + |g_ij|), ∂/∂τ by central difference and
/// R supplied by `ricci(tau, y)`.
template <class RicciFn>
double flow_residual_with(const ChartMetric& family, double tau, const Vec3& y,
                          double h_tau, RicciFn&& ricci) {
    if (!(tau - h_tau > 0.0)) throw DomainError("time stencil reaches tau <= 0");
    const Mat3 gp = family(tau + h_tau, y);
    const Mat3 gm = family(tau - h_tau, y);
    const Mat3 g = family(tau, y);
    const Mat3 ric = ricci(tau, y);
    double worst = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            const double dgdt = (gp[i][j] - gm[i][j]) / (2.0 * h_tau);
            worst = std::fmax(worst, std::fabs(dgdt - 0.5 * ric[i][j]) /
                                         (1.0 + std::fabs(g[i][j])));
        }
    return worst;
}

/// Residual of ∂g/∂τ = ½ Ric(g) with Ricci from numerical_ricci.
inline double flow_residual(const ChartMetric& family, double tau, const Vec3& y,
                            double h_tau = 1e-4, const Stencil& h_y = {}) {
    return flow_residual_with(family, tau, y, h_tau, [&](double t, const Vec3& p) {
        return numerical_ricci(family, t, p, h_y);
    });
}

} // namespace ancient::oracle
