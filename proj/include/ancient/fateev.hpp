#pragma once

// Fateev's two-parameter family on S³ under ∂g/∂τ = ½ Ric, parametrized by
// ξ > 0 with ντ = ξ − k·atanh(k tanh ξ).

#include <algorithm>
#include <cmath>
#include <string>

#include "ancient/errors.hpp"
#include "ancient/geometry_oracle.hpp"
#include "ancient/tensor.hpp"
#include "ancient/warped_s3.hpp"

namespace ancient::fateev {

struct FateevParams {
    double nu = 1.0;
    double k = 0.0;
    double lambda = 0.5;

    /// Validated constructor; λ = ν / (2(1 − k²)).
    static FateevParams make(double nu, double k) {
        if (!(nu > 0.0) || !std::isfinite(nu))
            throw InvalidParams("nu must be positive, got " + std::to_string(nu));
        if (!(k * k < 1.0)) throw InvalidParams("requires k^2 < 1, got k=" + std::to_string(k));
        return FateevParams{nu, k, nu / (2.0 * (1.0 - k * k))};
    }
};

/// Profile functions at one ξ. v = u + 2d is kept separately because it is
/// exponentially small for large ξ and must not be formed by cancellation.
struct FateevState {
    double xi = 0, tau = 0;
    double a = 0, b = 0, c = 0, d = 0, u = 0, v = 0;
};

struct ReducedDerivative {
    double du = 0, da = 0, db = 0, dc = 0;
};

inline void require_xi(double xi) {
    if (!(xi > 0.0) || !std::isfinite(xi))
        throw DomainError("xi must be positive and finite, got " + std::to_string(xi));
}

/// f(ξ) = ξ − k·atanh(k tanh ξ), so that ντ = f(ξ).
inline double time_function(double k, double xi) {
    return xi - k * std::atanh(k * std::tanh(xi));
}

/// f′(ξ) = (1 − k²) / (1 − k² tanh² ξ) ∈ (1 − k², 1].
inline double time_function_derivative(double k, double xi) {
    const double t = std::tanh(xi);
    return (1.0 - k * k) / (1.0 - k * k * t * t);
}

inline double xi_to_tau(const FateevParams& p, double xi) {
    require_xi(xi);
    return time_function(p.k, xi) / p.nu;
}

/// Safeguarded Newton for f(ξ) = ντ on the bracket [ντ, ντ/(1−k²)].
inline double tau_to_xi(const FateevParams& p, double tau, double tol = 1e-14) {
    if (!(tau > 0.0) || !std::isfinite(tau))
        throw DomainError("tau must be positive and finite, got " + std::to_string(tau));
    const double target = p.nu * tau;
    double lo = target;
    double hi = target / (1.0 - p.k * p.k);
    double xi = lo;
    const double ftol = tol * target;
    for (int it = 0; it < 200; ++it) {
        const double r = time_function(p.k, xi) - target;
        if (std::fabs(r) <= ftol) return xi;
        if (r > 0.0) hi = xi; else lo = xi;
        double next = xi - r / time_function_derivative(p.k, xi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::fabs(next - xi) <= 1e-16 * xi) return next;
        xi = next;
    }
    throw NoConvergence("tau_to_xi did not converge for tau=" + std::to_string(tau));
}

inline FateevState profile(const FateevParams& p, double xi) {
    require_xi(xi);
    const double lam = p.lambda;
    const double kk = p.k * p.k;
    const double t = std::tanh(xi);
    const double csch = 1.0 / std::sinh(xi);
    const double sech = 1.0 / std::cosh(xi);
    const double coth = 1.0 / t;
    // √(cosh² − k² sinh²)/sinh = √(csch² + 1 − k²); b uses (S−1)(S+1) = (1−k²)sinh².
    const double r = std::sqrt(csch * csch + 1.0 - kk);
    const double sq = std::sqrt(1.0 - kk * t * t);

    FateevState s;
    s.xi = xi;
    s.tau = xi_to_tau(p, xi);
    s.a = lam * (r + csch);
    s.b = lam * (1.0 - kk) / (r + csch);
    s.c = -lam * p.k * t;
    s.d = -lam * (kk * sech * sech + 1.0) / (sq * csch + coth);
    s.u = 2.0 * lam * coth;
    s.v = 2.0 * lam * sq * csch;
    return s;
}

inline FateevState profile_at_tau(const FateevParams& p, double tau) {
    return profile(p, tau_to_xi(p, tau));
}

namespace detail {

/// Coefficients of the form X = X̄/w with
///   Ā = u, B̄ = cos²θ·v − (d/2)sin²2θ, C̄ = sin²θ·v − (d/2)sin²2θ,
///   D̄ = (c/2) sin²2θ, w = w0 + wb·sin²2θ,
/// using v = u + 2d and cos²θ = (1 + cos2θ)/2. Derivatives by quotient rule.
inline WarpedCoeffs assemble(double u, double v, double c, double d, double w0, double wb,
                             double theta) {
    const double c2 = std::cos(2.0 * theta), s2 = std::sin(2.0 * theta);
    const double c4 = std::cos(4.0 * theta), s4 = std::sin(4.0 * theta);
    const double sq2 = s2 * s2;
    const double cos2 = std::cos(theta) * std::cos(theta);
    const double sin2 = std::sin(theta) * std::sin(theta);

    // d/dθ sin²2θ = 2 sin4θ, d²/dθ² sin²2θ = 8 cos4θ.
    const double w = w0 + wb * sq2, w1 = 2.0 * wb * s4, w2 = 8.0 * wb * c4;

    struct Num { double n, n1, n2; };
    const Num A{u, 0.0, 0.0};
    const Num B{cos2 * v - 0.5 * d * sq2, -v * s2 - d * s4, -2.0 * v * c2 - 4.0 * d * c4};
    const Num C{sin2 * v - 0.5 * d * sq2, v * s2 - d * s4, 2.0 * v * c2 - 4.0 * d * c4};
    const Num D{0.5 * c * sq2, c * s4, 4.0 * c * c4};

    const auto quot = [&](const Num& n, double& x, double& x1, double& x2) {
        x = n.n / w;
        x1 = (n.n1 - x * w1) / w;
        x2 = (n.n2 - 2.0 * x1 * w1 - x * w2) / w;
    };
    WarpedCoeffs out;
    out.theta = theta;
    quot(A, out.A, out.A1, out.A2);
    quot(B, out.B, out.B1, out.B2);
    quot(C, out.C, out.C1, out.C2);
    quot(D, out.D, out.D1, out.D2);
    return out;
}

inline void require_theta(double theta) {
    if (!(theta > 0.0 && theta < kPi / 2))
        throw DomainError("theta must lie in (0, pi/2), got " + std::to_string(theta));
}

} // namespace detail

/// w = a² − b²cos²2θ, written as uv + b² sin²2θ.
inline double weight(const FateevState& s, double theta) {
    const double s2 = std::sin(2.0 * theta);
    return s.u * s.v + s.b * s.b * s2 * s2;
}

/// A = u/w, B = cos²θ(u + 2d cos²θ)/w, C = sin²θ(u + 2d sin²θ)/w,
/// D = 2c sin²θ cos²θ/w, with exact θ-derivatives.
inline WarpedCoeffs metric_coeffs(const FateevState& s, double theta) {
    detail::require_theta(theta);
    return detail::assemble(s.u, s.v, s.c, s.d, s.u * s.v, s.b * s.b, theta);
}

/// du/dτ = −v², da/dτ = −a(a²−b²)/u, db/dτ = b(a²−b²)/u, dc/dτ = −c(du/dτ)/u.
inline ReducedDerivative reduced_vector_field(const FateevState& s) {
    ReducedDerivative r;
    const double v = (s.a - s.b) * (s.a + s.b) / s.u;
    r.du = -v * v;
    r.da = -s.a * v;
    r.db = s.b * v;
    r.dc = -r.du * s.c / s.u;
    return r;
}

/// Squared roots u₁² and u₂² of the u-equation du/dτ = −(u²−u₁²)(u²−u₂²)/u².
inline double u1(const FateevParams& p) { return p.nu / (1.0 - p.k * p.k); }
inline double u2(const FateevParams& p) { return p.nu * p.k / (1.0 - p.k * p.k); }

inline double u_equation_rhs(const FateevParams& p, double u) {
    const double a = u1(p), b = u2(p);
    return -(u * u - a * a) * (u * u - b * b) / (u * u);
}

/// R₁₁ = −2v²/w + 4(a²−b²)(a²+b²cos²2θ)/w² divided by A = u/w.
inline double focal_ricci_at(const FateevState& s, double theta) {
    const double w = weight(s, theta);
    const double c2 = std::cos(2.0 * theta);
    return -2.0 * s.v * s.v / s.u + 4.0 * s.v * (s.a * s.a + s.b * s.b * c2 * c2) / w;
}

/// g¹¹R₁₁ in the limit θ → 0. The expression is smooth in θ and is evaluated
/// at θ = 0, where w = uv.
inline double focal_ricci(const FateevParams& p, double xi) {
    return focal_ricci_at(profile(p, xi), 0.0);
}

/// Richardson estimate of the same limit from θ = h and h/2. The focal
/// region has width of order √(uv)/b, so h is shrunk with it.
inline double focal_ricci_richardson(const FateevParams& p, double xi, double h = 1e-5) {
    const FateevState s = profile(p, xi);
    const double width = std::sqrt(s.u * s.v) / s.b;
    const double t = h * std::min(1.0, width);
    return (4.0 * focal_ricci_at(s, t / 2) - focal_ricci_at(s, t)) / 3.0;
}

/// Ω-family time map Ωτ = ξ + ½ sinh 2ξ.
inline double omega_tau(double omega, double xi) {
    require_xi(xi);
    if (!(omega > 0.0)) throw InvalidParams("Omega must be positive");
    return (xi + 0.5 * std::sinh(2.0 * xi)) / omega;
}

inline double omega_xi(double omega, double tau, double tol = 1e-14) {
    if (!(omega > 0.0)) throw InvalidParams("Omega must be positive");
    if (!(tau > 0.0)) throw DomainError("tau must be positive");
    const double target = omega * tau;
    // 2ξ ≤ ξ + ½ sinh 2ξ, and asinh(2·target) bounds the sinh term from above.
    double lo = 0.0, hi = std::min(0.5 * target, 0.5 * std::asinh(2.0 * target) + 1.0);
    double xi = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double r = xi + 0.5 * std::sinh(2.0 * xi) - target;
        if (std::fabs(r) <= tol * std::max(1.0, target)) return xi;
        if (r > 0.0) hi = xi; else lo = xi;
        double next = xi - r / (1.0 + std::cosh(2.0 * xi));
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::fabs(next - xi) <= 1e-16 * xi) return next;
        xi = next;
    }
    throw NoConvergence("omega_xi did not converge");
}

struct OmegaPoint {
    WarpedCoeffs coeffs;
    double tau = 0;
};

/// ds²_Ω = F(ds²_stan − tanh²ξ(φ₁² + φ₂² + 2φ₁φ₂)) with F = sinh2ξ/Ω.
inline OmegaPoint omega_family(double omega, double xi, double theta) {
    detail::require_theta(theta);
    const double tau = omega_tau(omega, xi);
    const double F = std::sinh(2.0 * xi) / omega;
    const double t = std::tanh(xi);
    const double sech = 1.0 / std::cosh(xi);
    const double half = -0.5 * F * t * t;
    return OmegaPoint{detail::assemble(F, F * sech * sech, half, half, 1.0, 0.0, theta), tau};
}

/// Fiber and base scales of ds²_Ω = base·(ψ₁² + ψ₂²) + fiber·ψ₃².
struct HopfScales {
    double fiber = 0, base = 0;
};

inline HopfScales omega_hopf_scales(double omega, double xi) {
    require_xi(xi);
    return HopfScales{2.0 * std::tanh(xi) / omega, std::sinh(2.0 * xi) / omega};
}

/// Explicit k = 0 coefficients in terms of ξ and θ.
inline WarpedCoeffs k0_explicit(double nu, double xi, double theta) {
    const double s2 = std::sin(theta) * std::sin(theta);
    const double c2 = std::cos(theta) * std::cos(theta);
    const double ch = std::cosh(xi), sh = std::sinh(xi);
    const double p = s2 + c2 * ch, q = c2 + s2 * ch;
    WarpedCoeffs w;
    w.theta = theta;
    w.A = sh * ch / (p * q) / nu;
    w.B = c2 * sh / p / nu;
    w.C = s2 * sh / q / nu;
    w.D = 0.0;
    return w;
}

struct CigarSample {
    double g_yy = 0, g_chi1 = 0, g_chi2 = 0, g_cross = 0;
    double target_yy = 0, target_chi1 = 0, target_chi2 = 0;

    double max_deviation() const {
        return std::max({std::fabs(g_yy - target_yy), std::fabs(g_chi1 - target_chi1),
                         std::fabs(g_chi2 - target_chi2), std::fabs(g_cross)});
    }
};

/// k = 0 metric in the recentered coordinate ỹ = y + ξ/2 with tanθ = e^{−ỹ},
/// against the cigar × S¹ limit (1/ν)((dy² + dχ₂²)/(1 + 2e^{2y}) + dχ₁²).
inline CigarSample cigar_limit_coeffs(double nu, double xi, double y) {
    const FateevParams p = FateevParams::make(nu, 0.0);
    const double yt = y + 0.5 * xi;
    const double theta = std::atan(std::exp(-yt));
    const WarpedCoeffs w = metric_coeffs(profile(p, xi), theta);
    const double sc = std::sin(theta) * std::cos(theta);
    CigarSample s;
    s.g_yy = w.A * sc * sc;
    s.g_chi1 = w.B;
    s.g_chi2 = w.C;
    s.g_cross = w.D;
    s.target_yy = 1.0 / (nu * (1.0 + 2.0 * std::exp(2.0 * y)));
    s.target_chi1 = 1.0 / nu;
    s.target_chi2 = s.target_yy;
    return s;
}

/// max |(1/ν)·g_{ν,k}(ντ) − τ·g_round| over A, B, C, D at θ.
inline double hamilton_rescale_check(double k, double nu, double tau, double theta) {
    const FateevParams p = FateevParams::make(nu, k);
    const WarpedCoeffs w = metric_coeffs(profile_at_tau(p, nu * tau), theta);
    const double c2 = std::cos(theta) * std::cos(theta);
    const double s2 = std::sin(theta) * std::sin(theta);
    return std::max({std::fabs(w.A / nu - tau), std::fabs(w.B / nu - tau * c2),
                     std::fabs(w.C / nu - tau * s2), std::fabs(w.D / nu)});
}

/// max coefficient deviation from (1/ν)(dθ²/(sin²θcos²θ) + dχ₁² + dχ₂² − 2k dχ₁dχ₂).
inline double collapse_limit_deviation(const FateevParams& p, double xi, double theta) {
    const WarpedCoeffs w = metric_coeffs(profile(p, xi), theta);
    const double sc = std::sin(theta) * std::cos(theta);
    return std::max({std::fabs(w.A - 1.0 / (p.nu * sc * sc)), std::fabs(w.B - 1.0 / p.nu),
                     std::fabs(w.C - 1.0 / p.nu), std::fabs(w.D + p.k / p.nu)});
}

/// Time-dependent chart metric of the family, for the finite-difference oracle.
inline oracle::ChartMetric chart_metric(const FateevParams& p) {
    return oracle::ChartMetric{[p](double tau, const Vec3& y) {
        return metric_coeffs(profile_at_tau(p, tau), y[0]).metric();
    }};
}

inline oracle::ChartMetric omega_chart_metric(double omega) {
    return oracle::ChartMetric{[omega](double tau, const Vec3& y) {
        return omega_family(omega, omega_xi(omega, tau), y[0]).coeffs.metric();
    }};
}

/// Flow residual with the time derivative by central differences and the
/// Ricci tensor from the closed forms.
inline double closed_flow_residual(const FateevParams& p, double tau, double theta,
                                   double h_tau = 1e-5) {
    const auto family = chart_metric(p);
    return oracle::flow_residual_with(family, tau, Vec3{theta, 0.0, 0.0}, h_tau,
                                      [&](double t, const Vec3& y) {
                                          return ricci_closed(metric_coeffs(profile_at_tau(p, t), y[0]))
                                              .matrix();
                                      });
}

/// Conserved products and integrability defects of a profile, as relative errors.
struct ProfileDefects {
    double uc = 0, ab = 0, ic1 = 0, ic2 = 0;
    double max() const { return std::max({uc, ab, ic1, ic2}); }
};

inline ProfileDefects profile_defects(const FateevParams& p, const FateevState& s) {
    const auto rel = [](double x, double ref) {
        return std::fabs(x - ref) / std::max(std::fabs(ref), 1e-300);
    };
    const double lam2 = p.lambda * p.lambda;
    ProfileDefects e;
    e.uc = p.k == 0.0 ? std::fabs(s.u * s.c) : rel(s.u * s.c, -2.0 * lam2 * p.k);
    e.ab = rel(s.a * s.b, lam2 * (1.0 - p.k * p.k));
    e.ic1 = rel((s.u + s.d) * (s.u + s.d), s.a * s.a + s.c * s.c);
    e.ic2 = rel(s.d * s.d, s.b * s.b + s.c * s.c);
    return e;
}

} // namespace ancient::fateev
