#pragma once

// Closed-form geometry of g = A dθ² + B dχ₁² + C dχ₂² + 2D dχ₁dχ₂ where the
// coefficients depend on θ only.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ancient/errors.hpp"
#include "ancient/tensor.hpp"

namespace ancient {

/// Metric coefficients and their first/second θ-derivatives at one θ.
struct WarpedCoeffs {
    double A = 0, B = 0, C = 0, D = 0;
    double A1 = 0, B1 = 0, C1 = 0, D1 = 0;
    double A2 = 0, B2 = 0, C2 = 0, D2 = 0;
    double theta = 0;

    double delta() const { return B * C - D * D; }
    double delta1() const { return B1 * C + B * C1 - 2.0 * D * D1; }
    double delta2() const {
        return B2 * C + 2.0 * B1 * C1 + B * C2 - 2.0 * D1 * D1 - 2.0 * D * D2;
    }

    Mat3 metric() const {
        return Mat3{Vec3{A, 0.0, 0.0}, Vec3{0.0, B, D}, Vec3{0.0, D, C}};
    }

    bool positive_definite() const { return A > 0 && B > 0 && delta() > 0; }
};

/// The four independent Ricci components; R₁₂ = R₁₃ = 0 for this ansatz.
struct RicciComponents {
    double R11 = 0, R22 = 0, R23 = 0, R33 = 0;

    Mat3 matrix() const {
        return Mat3{Vec3{R11, 0.0, 0.0}, Vec3{0.0, R22, R23}, Vec3{0.0, R23, R33}};
    }
};

struct SpectrumEntry {
    double value = 0;
    int multiplicity = 0;
    std::string label;
};

/// Eigenvalues of a curvature operator on 2-forms, with multiplicities.
struct CurvatureSpectrum {
    std::vector<SpectrumEntry> entries;

    int total_multiplicity() const {
        int n = 0;
        for (const auto& e : entries) n += e.multiplicity;
        return n;
    }

    /// Smallest eigenvalue among entries that actually occur.
    double min_value() const {
        double m = INFINITY;
        for (const auto& e : entries)
            if (e.multiplicity > 0) m = std::fmin(m, e.value);
        return m;
    }

    double max_abs_value() const {
        double m = 0.0;
        for (const auto& e : entries)
            if (e.multiplicity > 0) m = std::fmax(m, std::fabs(e.value));
        return m;
    }

    bool positive() const { return min_value() > 0.0; }
};

namespace detail {
inline void require_delta(const WarpedCoeffs& c) {
    if (!(c.delta() > 0.0))
        throw DegenerateDelta("Delta = BC - D^2 = " + std::to_string(c.delta()) +
                              " is not positive");
    if (!(c.A > 0.0)) throw DegenerateDelta("A is not positive");
}
} // namespace detail

/// Exact Christoffel symbols Γᵏᵢⱼ of the ansatz.
inline Christoffel christoffel_closed(const WarpedCoeffs& c) {
    detail::require_delta(c);
    const double dl = c.delta();
    Christoffel g{};

    g[0][0][0] = 0.5 * c.A1 / c.A;
    g[0][1][1] = -0.5 * c.B1 / c.A;
    g[0][1][2] = g[0][2][1] = -0.5 * c.D1 / c.A;
    g[0][2][2] = -0.5 * c.C1 / c.A;

    // Γᵏ₁ⱼ for k,j ∈ {2,3} is ½ (M⁻¹M′) with M the χ-block of the metric.
    g[1][0][1] = g[1][1][0] = (c.C * c.B1 - c.D * c.D1) / (2.0 * dl);
    g[1][0][2] = g[1][2][0] = (c.C * c.D1 - c.D * c.C1) / (2.0 * dl);
    g[2][0][1] = g[2][1][0] = (c.B * c.D1 - c.D * c.B1) / (2.0 * dl);
    g[2][0][2] = g[2][2][0] = (c.B * c.C1 - c.D * c.D1) / (2.0 * dl);
    return g;
}

/// (B′C′ − D′²) / 2Δ, the combination shared by every clean Ricci component.
inline double torus_curvature_term(const WarpedCoeffs& c) {
    return (c.B1 * c.C1 - c.D1 * c.D1) / (2.0 * c.delta());
}

/// Ricci components in the compact form built from A, Δ and their logs.
inline RicciComponents ricci_closed(const WarpedCoeffs& c) {
    detail::require_delta(c);
    const double dl = c.delta();
    const double dl1 = c.delta1();
    const double dl2 = c.delta2();
    const double x = torus_curvature_term(c);
    const double s = c.A1 / c.A + dl1 / dl;

    RicciComponents r;
    r.R11 = dl1 / (4.0 * dl) * s - dl2 / (2.0 * dl) + x;
    r.R22 = c.B1 / (4.0 * c.A) * s - c.B2 / (2.0 * c.A) - c.B / c.A * x;
    r.R23 = c.D1 / (4.0 * c.A) * s - c.D2 / (2.0 * c.A) - c.D / c.A * x;
    r.R33 = c.C1 / (4.0 * c.A) * s - c.C2 / (2.0 * c.A) - c.C / c.A * x;
    return r;
}

/// Ricci components expanded directly from the Christoffel symbols.
inline RicciComponents ricci_raw(const WarpedCoeffs& c) {
    detail::require_delta(c);
    const double A = c.A, B = c.B, C = c.C, D = c.D;
    const double A1 = c.A1, B1 = c.B1, C1 = c.C1, D1 = c.D1;
    const double B2 = c.B2, C2 = c.C2, D2 = c.D2;
    const double dl = c.delta();

    RicciComponents r;
    r.R11 = A1 / (4.0 * A) * (C * B1 + B * C1 - 2.0 * D * D1) / dl -
            (C * B2 + B * C2 - 2.0 * D * D2) / (2.0 * dl) +
            (C1 * C1 * B * B + C * C * B1 * B1 + 2.0 * D * D * D1 * D1 -
             4.0 * C1 * B * D * D1 - 4.0 * C * B1 * D * D1 + 2.0 * C1 * B1 * D * D +
             2.0 * D1 * D1 * B * C) /
                (4.0 * dl * dl);
    r.R22 = A1 * B1 / (4.0 * A * A) - B2 / (2.0 * A) +
            (B1 * (C * B1 - B * C1) + 2.0 * D1 * (D1 * B - D * B1)) / (4.0 * A * dl);
    r.R23 = A1 * D1 / (4.0 * A * A) - D2 / (2.0 * A) +
            (B1 * (C * D1 - D * C1) + C1 * (B * D1 - D * B1)) / (4.0 * A * dl);
    r.R33 = A1 * C1 / (4.0 * A * A) - C2 / (2.0 * A) +
            (C1 * (C1 * B - C * B1) + 2.0 * D1 * (C * D1 - D * C1)) / (4.0 * A * dl);
    return r;
}

/// Diagonal curvature operator of the k = 0 family in the frame e₁∧e₂,
/// e₁∧e₃, e₂∧e₃, written through the profile values a > b > 0.
inline CurvatureSpectrum curvature_operator_k0(double a, double b, double theta) {
    if (!(a > b && b > 0.0))
        throw InvalidProfile("k=0 curvature operator needs a > b > 0");
    const double c2 = std::cos(2.0 * theta);
    const double g = a - b;
    const double base = -g / (a + b);
    CurvatureSpectrum s;
    s.entries = {
        {g * (base + 2.0 * (a - b * c2) / (a + b * c2)), 1, "e1^e2"},
        {g * (base + 2.0 * (a + b * c2) / (a - b * c2)), 1, "e1^e3"},
        {g * g / (a + b), 1, "e2^e3"},
    };
    return s;
}

enum class Pole { Zero, HalfPi };

struct PoleVerdict {
    bool pass = false;
    /// Limit of (collapsing warp factor) / (arclength from the pole).
    double collapse_slope = 0;
    /// d/ds of the surviving warp factor at the pole.
    double surviving_slope = 0;
    std::string collapsing;  // "B" or "C"
    std::string detail;
};

/// Smooth-closing test at a pole: the vanishing warp factor must grow with
/// unit slope in arclength and the surviving factor must be even.
inline PoleVerdict pole_regularity_check(
    const std::function<WarpedCoeffs(double theta)>& coeffs_of_theta, Pole pole,
    double tol) {
    const auto at = [&](double t) {
        return coeffs_of_theta(pole == Pole::Zero ? t : kPi / 2 - t);
    };
    constexpr double t_min = 1e-6;
    const auto arclength = [&](double t) {
        // Simpson on (t_min, t) plus the sliver next to the pole.
        constexpr int n = 400;
        const double h = (t - t_min) / n;
        double acc = std::sqrt(at(t_min).A) + std::sqrt(at(t).A);
        for (int i = 1; i < n; ++i)
            acc += (i % 2 ? 4.0 : 2.0) * std::sqrt(at(t_min + i * h).A);
        return acc * h / 3.0 + t_min * std::sqrt(at(t_min).A);
    };

    PoleVerdict v;
    const WarpedCoeffs probe = at(1e-4);
    const bool b_collapses = probe.B < probe.C;
    v.collapsing = b_collapses ? "B" : "C";
    const auto collapsing = [&](const WarpedCoeffs& c) {
        return std::sqrt(b_collapses ? c.B : c.C);
    };
    const auto surviving = [&](const WarpedCoeffs& c) {
        return std::sqrt(b_collapses ? c.C : c.B);
    };

    constexpr double h = 1e-3;
    const double s1 = arclength(h), s2 = arclength(2 * h), s3 = arclength(3 * h);
    const WarpedCoeffs c1 = at(h), c2 = at(2 * h), c3 = at(3 * h);
    const double r1 = collapsing(c1) / s1;
    const double r2 = collapsing(c2) / s2;
    v.collapse_slope = (4.0 * r1 - r2) / 3.0;

    // Quadratic through three samples of the surviving factor; slope at s = 0.
    const double g1 = surviving(c1), g2 = surviving(c2), g3 = surviving(c3);
    const double d12 = (g2 - g1) / (s2 - s1);
    const double d23 = (g3 - g2) / (s3 - s2);
    const double curv = (d23 - d12) / (s3 - s1);
    v.surviving_slope = d12 - curv * (s1 + s2);

    v.pass = std::fabs(v.collapse_slope - 1.0) <= tol && std::fabs(v.surviving_slope) <= tol;
    v.detail = "collapsing factor sqrt(" + v.collapsing + ") slope " +
               std::to_string(v.collapse_slope) + ", surviving slope " +
               std::to_string(v.surviving_slope);
    return v;
}

} // namespace ancient
