#pragma once

// Two-variable reductions of Ricci flow on fibered spaces. The metric is
// a·(fiber) + b·(base) and the flow is ∂g/∂τ = 2 Ric.

#include <cmath>
#include <optional>
#include <regex>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ancient/errors.hpp"
#include "ancient/warped_s3.hpp"

namespace ancient::bundle {

/// Circle bundle over a Kähler–Einstein base with Ric = p·g and curvature q·ω.
struct U1Bundle {
    int m = 1;
    double p = 4.0;
    double q = -1.0;
};

/// SU(2)/SO(3) bundle over a quaternion-Kähler base.
struct SU2Bundle {
    int m = 2;
    double p = 16.0;
    double q = 2.0;
};

/// Riemannian submersion with totally geodesic Einstein fibers.
struct Submersion {
    double lambda = 6.0;
    double lambda_hat = 2.0;
    double lambda_check = 12.0;
};

using FibrationParams = std::variant<U1Bundle, SU2Bundle, Submersion>;

struct FlowState {
    double tau = 0;
    double a = 1;
    double b = 1;

    double y() const { return a / b; }
};

struct Derivative {
    double da = 0, db = 0;
};

struct EinsteinRay {
    double ratio = 0;
    double slope_a = 0, slope_b = 0;
    std::string label;

    FlowState at(double tau) const { return FlowState{tau, slope_a * tau, slope_b * tau}; }
};

struct FirstIntegral {
    double value = 0;
    bool on_separatrix = false;
};

struct QKConstants {
    double r1 = 0, r2 = 0, A = 0, B = 0;
};

struct SubmersionConstants {
    double Lambda1 = 0, Lambda2 = 0;
    /// Λ₁ < 1, needed for a connector between the two rays.
    bool connector_hypothesis = false;
};

// ---------------------------------------------------------------------------
// Construction

inline QKConstants qk_constants(int m, double p, double q) {
    const double disc = p * p - 4.0 * (2 * m + 3) * q * q;
    if (!(disc > 0.0))
        throw ComplexRoots("p^2 <= 4(2m+3)q^2: Einstein ratios are not real");
    const double s = std::sqrt(disc);
    const double n = 2 * m + 3;
    QKConstants c;
    c.r1 = (p + s) / (n * q * q);
    c.r2 = (p - s) / (n * q * q);
    c.A = ((4 * m + 3) * p - 3.0 * s) / (2.0 * n * s);
    c.B = ((4 * m + 3) * p + 3.0 * s) / (2.0 * n * s);
    return c;
}

inline SubmersionConstants submersion_constants(double lambda, double lambda_hat,
                                                double lambda_check) {
    SubmersionConstants c;
    const double gap = lambda_check - lambda_hat;
    c.Lambda1 = lambda_hat / gap;
    c.Lambda2 = (lambda_check * lambda_check - 2.0 * lambda_hat * lambda_check +
                 lambda_hat * lambda) /
                gap;
    c.connector_hypothesis = c.Lambda1 < 1.0;
    return c;
}

inline SubmersionConstants submersion_constants(const Submersion& s) {
    return submersion_constants(s.lambda, s.lambda_hat, s.lambda_check);
}

inline U1Bundle make_u1(int m, double p, double q) {
    if (m < 1) throw InvalidParams("U1 bundle needs m >= 1");
    if (!(p > 0.0)) throw InvalidParams("U1 bundle needs p > 0");
    if (!(q != 0.0) || !std::isfinite(q)) throw InvalidParams("U1 bundle needs q != 0");
    return U1Bundle{m, p, q};
}

inline SU2Bundle make_su2(int m, double p, double q) {
    if (m < 2) throw InvalidParams("SU2 bundle needs m >= 2");
    if (!(p > 0.0)) throw InvalidParams("SU2 bundle needs p > 0");
    if (!(q != 0.0) || !std::isfinite(q)) throw InvalidParams("SU2 bundle needs q != 0");
    qk_constants(m, p, q);
    return SU2Bundle{m, p, q};
}

inline Submersion make_submersion(double lambda, double lambda_hat, double lambda_check) {
    if (!(lambda_check > lambda && lambda > lambda_hat))
        throw InvalidParams("submersion needs lambda_check > lambda > lambda_hat");
    if (lambda_check == 2.0 * lambda_hat)
        throw InvalidParams("submersion with lambda_check = 2 lambda_hat has no first integral");
    return Submersion{lambda, lambda_hat, lambda_check};
}

/// Re-validates parameters of any variant.
inline FibrationParams validated(const FibrationParams& fp) {
    return std::visit(
        [](const auto& v) -> FibrationParams {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, U1Bundle>) return make_u1(v.m, v.p, v.q);
            else if constexpr (std::is_same_v<T, SU2Bundle>) return make_su2(v.m, v.p, v.q);
            else return make_submersion(v.lambda, v.lambda_hat, v.lambda_check);
        },
        fp);
}

// ---------------------------------------------------------------------------
// Dynamics

inline Derivative vector_field(const FibrationParams& fp, double a, double b) {
    const double y = a / b;
    return std::visit(
        [&](const auto& v) -> Derivative {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, U1Bundle>) {
                const double q2 = v.q * v.q;
                return {v.m * q2 * y * y, 2.0 * v.p - q2 * y};
            } else if constexpr (std::is_same_v<T, SU2Bundle>) {
                const double q2 = v.q * v.q;
                return {4.0 + 2.0 * v.m * q2 * y * y, 2.0 * v.p - 3.0 * q2 * y};
            } else {
                return {2.0 * v.lambda_hat + 2.0 * (v.lambda - v.lambda_hat) * y * y,
                        2.0 * v.lambda_check - 2.0 * (v.lambda_check - v.lambda) * y};
            }
        },
        fp);
}

inline Derivative vector_field(const FibrationParams& fp, const FlowState& s) {
    return vector_field(fp, s.a, s.b);
}

/// dy/dτ for y = a/b.
inline double ratio_rate(const FibrationParams& fp, const FlowState& s) {
    const Derivative d = vector_field(fp, s);
    return (d.da - s.y() * d.db) / s.b;
}

inline std::vector<EinsteinRay> einstein_rays(const FibrationParams& fp) {
    return std::visit(
        [&](const auto& v) -> std::vector<EinsteinRay> {
            using T = std::decay_t<decltype(v)>;
            const auto ray = [&](double r, std::string label) {
                const Derivative d = vector_field(fp, r, 1.0);
                return EinsteinRay{r, d.da, d.db, std::move(label)};
            };
            if constexpr (std::is_same_v<T, U1Bundle>) {
                const double q2 = v.q * v.q, m1 = v.m + 1.0;
                return {EinsteinRay{2.0 * v.p / (m1 * q2),
                                    4.0 * v.m * v.p * v.p / (m1 * m1 * q2),
                                    2.0 * v.m * v.p / m1, "einstein"}};
            } else if constexpr (std::is_same_v<T, SU2Bundle>) {
                const QKConstants c = qk_constants(v.m, v.p, v.q);
                return {ray(c.r1, "r1"), ray(c.r2, "r2")};
            } else {
                const SubmersionConstants c = submersion_constants(v);
                return {EinsteinRay{1.0, 2.0 * v.lambda, 2.0 * v.lambda, "product"},
                        EinsteinRay{c.Lambda1, 2.0 * c.Lambda2 * c.Lambda1, 2.0 * c.Lambda2,
                                    "squashed"}};
            }
        },
        fp);
}

/// Einstein ratios y* (roots of dy/dτ), in the order of einstein_rays.
inline std::vector<double> einstein_ratios(const FibrationParams& fp) {
    std::vector<double> out;
    for (const auto& r : einstein_rays(fp)) out.push_back(r.ratio);
    return out;
}

inline double signed_pow(double x, double e) {
    return std::copysign(std::pow(std::fabs(x), e), x);
}

inline FirstIntegral first_integral(const FibrationParams& fp, const FlowState& s) {
    constexpr double sep_tol = 1e-12;
    const double y = s.y();
    const auto near = [&](double root) {
        return std::fabs(y - root) <= sep_tol * std::max(1.0, std::fabs(root));
    };
    return std::visit(
        [&](const auto& v) -> FirstIntegral {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, U1Bundle>) {
                const double m = v.m;
                const double ystar = 2.0 * v.p / ((m + 1.0) * v.q * v.q);
                const double x = (ystar - y) * std::pow(s.a, -(m + 1.0) / m);
                if (near(ystar)) return {0.0, true};
                return {signed_pow(x, m / (m + 1.0)), false};
            } else if constexpr (std::is_same_v<T, SU2Bundle>) {
                const QKConstants c = qk_constants(v.m, v.p, v.q);
                if (near(c.r1) || near(c.r2)) return {0.0, true};
                const double val =
                    std::pow(std::fabs(y - c.r1), c.A) * std::pow(std::fabs(y - c.r2), -c.B) / s.b;
                return {val, false};
            } else {
                const SubmersionConstants c = submersion_constants(v);
                const double den = v.lambda_check - 2.0 * v.lambda_hat;
                if (near(1.0) || near(c.Lambda1)) return {0.0, true};
                const double val = std::pow(std::fabs(1.0 - y), v.lambda / den) *
                                   std::pow(std::fabs(c.Lambda1 - y), -c.Lambda2 / den) / s.b;
                return {val, false};
            }
        },
        fp);
}

/// Closed-form m = 1 U(1) solution: a = tanhξ/ν, b = (q²/p) sinhξ coshξ/ν,
/// ξ + ½ sinh 2ξ = 2(p²/q²) ντ.
inline FlowState u1_explicit_m1(double p, double q, double nu, double xi) {
    if (!(xi > 0.0)) throw DomainError("xi must be positive");
    if (!(nu > 0.0) || !(p > 0.0) || q == 0.0) throw InvalidParams("need nu > 0, p > 0, q != 0");
    const double q2 = q * q;
    FlowState s;
    s.a = std::tanh(xi) / nu;
    s.b = q2 / p * std::sinh(xi) * std::cosh(xi) / nu;
    s.tau = (xi + 0.5 * std::sinh(2.0 * xi)) * q2 / (2.0 * p * p * nu);
    return s;
}

/// Curvature-operator eigenvalues of the U(1) bundle over CP^m.
inline CurvatureSpectrum curvature_spectrum_u1_cpm(int m, double p, double q, double a,
                                                   double b) {
    const double q2 = q * q;
    const double y = a / b;
    CurvatureSpectrum s;
    s.entries = {
        {p / b * (1.0 - (2 * m + 1) * q2 * y / (4.0 * p)), 1, "fiber-horizontal (Kahler form)"},
        {p / ((m + 1) * b) * (1.0 - (m + 1) * q2 * y / (4.0 * p)), m * m - 1, "primitive (1,1)"},
        {q2 * a / (4.0 * b * b), m * m + m, "vertical-horizontal"},
    };
    return s;
}

/// Largest ratio a/b at which the CP^m spectrum stays positive.
inline double u1_positivity_threshold(int m, double p, double q) {
    return 4.0 * p / ((2 * m + 1) * q * q);
}

// ---------------------------------------------------------------------------
// Presets

struct PresetInfo {
    std::string pattern;
    std::string variant;
    std::string total_space;
    std::string constants;
    std::string example;
    bool takes_m = true;
    int min_m = 1;
};

inline const std::vector<PresetInfo>& preset_catalog() {
    static const std::vector<PresetInfo> catalog = {
        {"hopf_u1(m)", "U1", "S^{2m+1} -> CP^m", "m, p = 2(m+1), q = -1",
         "Hopf circle fibration; m = 7 gives the S^15 circle bundle", true, 1},
        {"hopf_su2_qk(m)", "SU2", "S^{4m+3} -> HP^m", "m, p = 4m+8, q = p/(2(m+2)) = 2",
         "quaternionic Hopf bundle with the simple-constant choice of q", true, 2},
        {"quaternionic_submersion(m)", "Submersion", "S^3 -> S^{4m+3} -> HP^m",
         "lambda = 4m+2, lambda_hat = 2, lambda_check = 4m+8",
         "m = 3 gives S^3 -> S^15 -> HP^3", true, 1},
        {"cp_odd_submersion(m)", "Submersion", "S^2 -> CP^{2m+1} -> HP^m",
         "lambda = 4m+4, lambda_hat = 4, lambda_check = 4m+8", "twistor fibration of HP^m",
         true, 1},
        {"octonionic", "Submersion", "S^7 -> S^15 -> S^8",
         "lambda = 14, lambda_hat = 6, lambda_check = 28", "octonionic Hopf fibration", false,
         0},
        {"twistor(m)", "Submersion", "twistor space over a quaternion-Kahler base",
         "same constants as cp_odd_submersion(m)", "positive quaternion-Kahler twistor fibration",
         true, 1},
    };
    return catalog;
}

inline FibrationParams preset(const std::string& name) {
    static const std::regex re(R"(^\s*([a-z_0-9]+?)\s*(?:\(\s*(\d+)\s*\))?\s*$)");
    std::smatch mt;
    if (!std::regex_match(name, mt, re)) throw UnknownPreset("unknown preset '" + name + "'");
    const std::string base = mt[1];
    const bool has_m = mt[2].matched;
    const int m = has_m ? std::stoi(mt[2]) : 0;

    const PresetInfo* info = nullptr;
    for (const auto& p : preset_catalog())
        if (p.pattern.substr(0, p.pattern.find('(')) == base) info = &p;
    if (!info) throw UnknownPreset("unknown preset '" + name + "'");
    if (info->takes_m != has_m)
        throw UnknownPreset(info->takes_m ? "preset '" + base + "' needs an argument (m)"
                                          : "preset '" + base + "' takes no argument");
    if (info->takes_m && m < info->min_m)
        throw InvalidParams("preset '" + base + "' needs m >= " + std::to_string(info->min_m));

    if (base == "hopf_u1") return make_u1(m, 2.0 * (m + 1), -1.0);
    if (base == "hopf_su2_qk") {
        const double p = 4.0 * m + 8.0;
        return make_su2(m, p, p / (2.0 * (m + 2)));
    }
    if (base == "quaternionic_submersion") return make_submersion(4.0 * m + 2, 2.0, 4.0 * m + 8);
    if (base == "cp_odd_submersion" || base == "twistor")
        return make_submersion(4.0 * m + 4, 4.0, 4.0 * m + 8);
    return make_submersion(14.0, 6.0, 28.0);
}

// ---------------------------------------------------------------------------
// JSON

inline std::string variant_name(const FibrationParams& fp) {
    switch (fp.index()) {
    case 0: return "U1";
    case 1: return "SU2";
    default: return "Submersion";
    }
}

inline nlohmann::json to_json(const FibrationParams& fp) {
    return std::visit(
        [](const auto& v) -> nlohmann::json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, U1Bundle>)
                return {{"variant", "U1"}, {"m", v.m}, {"p", v.p}, {"q", v.q}};
            else if constexpr (std::is_same_v<T, SU2Bundle>)
                return {{"variant", "SU2"}, {"m", v.m}, {"p", v.p}, {"q", v.q}};
            else
                return {{"variant", "Submersion"},
                        {"lambda", v.lambda},
                        {"lambda_hat", v.lambda_hat},
                        {"lambda_check", v.lambda_check}};
        },
        fp);
}

inline nlohmann::json catalog_json() {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : preset_catalog()) {
        const std::string sample =
            p.takes_m ? p.pattern.substr(0, p.pattern.find('(')) + "(" +
                            std::to_string(std::max(p.min_m, 1)) + ")"
                      : p.pattern;
        nlohmann::json entry = {{"name", p.pattern},
                                {"total_space", p.total_space},
                                {"constants", p.constants},
                                {"example", p.example},
                                {"sample", sample}};
        entry.update(to_json(preset(sample)));
        arr.push_back(entry);
    }
    return arr;
}

} // namespace ancient::bundle
