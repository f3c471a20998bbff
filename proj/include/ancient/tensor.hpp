#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace ancient {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;
/// Christoffel symbols of the second kind, indexed [k][i][j] for Γᵏᵢⱼ.
using Christoffel = std::array<Mat3, 3>;

inline constexpr double kPi = 3.14159265358979323846;

inline Mat3 zero_mat3() { return Mat3{}; }

inline double det3(const Mat3& m) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

/// Adjugate divided by the determinant; caller checks the determinant first.
inline Mat3 inverse3(const Mat3& m, double det) {
    Mat3 r{};
    r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return r;
}

inline double max_abs(const Mat3& m) {
    double r = 0.0;
    for (const auto& row : m)
        for (double v : row) r = std::fmax(r, std::fabs(v));
    return r;
}

inline double max_abs(const Christoffel& g) {
    double r = 0.0;
    for (const auto& m : g) r = std::fmax(r, max_abs(m));
    return r;
}

inline Mat3 operator-(const Mat3& x, const Mat3& y) {
    Mat3 r{};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) r[i][j] = x[i][j] - y[i][j];
    return r;
}

inline Christoffel operator-(const Christoffel& x, const Christoffel& y) {
    Christoffel r{};
    for (std::size_t k = 0; k < 3; ++k) r[k] = x[k] - y[k];
    return r;
}

} // namespace ancient
