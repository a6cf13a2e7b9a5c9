// Rotation-group helpers: skew, exponential/log maps and the right Jacobian.
#pragma once

#include <stridenav/types.hpp>

#include <algorithm>
#include <cmath>

namespace stridenav::so3 {

/// skew(v) * w == v.cross(w)
inline Matrix3 skew(const Vector3 &v) {
    Matrix3 m;
    m << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
        -v.y(), v.x(), 0.0;
    return m;
}

inline Vector3 unskew(const Matrix3 &m) {
    return {0.5 * (m(2, 1) - m(1, 2)), 0.5 * (m(0, 2) - m(2, 0)),
            0.5 * (m(1, 0) - m(0, 1))};
}

constexpr double kExpSeriesThreshold = 1e-7;
constexpr double kJacobianSeriesThreshold = 1e-5;

/// Rodrigues formula; 4th-order series below kExpSeriesThreshold.
inline RotationMatrix exp_map(const Vector3 &phi) {
    const double angle = phi.norm();
    const Matrix3 K = skew(phi);
    const Matrix3 K2 = K * K;
    if (angle < kExpSeriesThreshold) {
        const double a2 = angle * angle;
        return Matrix3::Identity() + (1.0 - a2 / 6.0) * K + (0.5 - a2 / 24.0) * K2;
    }
    const double s = std::sin(angle) / angle;
    const double c = (1.0 - std::cos(angle)) / (angle * angle);
    return Matrix3::Identity() + s * K + c * K2;
}

/// Principal logarithm. Returned vector has norm in [0, pi].
inline Vector3 log_map(const RotationMatrix &C) {
    const double cos_angle = std::clamp(0.5 * (C.trace() - 1.0), -1.0, 1.0);
    const double angle = std::atan2(unskew(C).norm(), cos_angle);
    if (angle < 1e-7) return unskew(C);
    if (kPi - angle < 1e-5) {
        // Near a half turn the antisymmetric part vanishes; recover the axis
        // from the symmetric part, a a^T = (sym(C) - cos I) / (1 - cos).
        const Matrix3 B = (0.5 * (C + C.transpose()) - cos_angle * Matrix3::Identity()) / (1.0 - cos_angle);
        Eigen::Index i;
        B.diagonal().maxCoeff(&i);
        Vector3 axis = B.col(i) / std::sqrt(std::max(B(i, i), 1e-300));
        axis.normalize();
        const Vector3 w = unskew(C);
        if (w.dot(axis) < 0.0) axis = -axis;
        return angle * axis;
    }
    return angle / std::sin(angle) * unskew(C);
}

/// Right Jacobian J_r(phi) such that
/// exp(phi + d) ~= exp(phi) exp(J_r(phi) d).
inline Matrix3 right_jacobian(const Vector3 &phi) {
    const double angle = phi.norm();
    const Matrix3 K = skew(phi);
    if (angle < kJacobianSeriesThreshold) {
        return Matrix3::Identity() - 0.5 * K + K * K / 6.0;
    }
    const Vector3 a = phi / angle;
    const double sa = std::sin(angle) / angle;
    return sa * Matrix3::Identity() + (1.0 - sa) * a * a.transpose() -
           (1.0 - std::cos(angle)) / angle * skew(a);
}

inline Matrix3 right_jacobian_inverse(const Vector3 &phi) {
    const double angle = phi.norm();
    const Matrix3 K = skew(phi);
    if (angle < kJacobianSeriesThreshold) {
        return Matrix3::Identity() + 0.5 * K + K * K / 12.0;
    }
    const double cot_term = 1.0 / (angle * angle) - (1.0 + std::cos(angle)) / (2.0 * angle * std::sin(angle));
    return Matrix3::Identity() + 0.5 * K + cot_term * K * K;
}

/// Project a nearly orthonormal matrix back onto SO(3) (polar decomposition).
inline RotationMatrix orthonormalize(const Matrix3 &C) {
    Eigen::JacobiSVD<Matrix3> svd(C, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Matrix3 R = svd.matrixU() * svd.matrixV().transpose();
    if (R.determinant() < 0.0) {
        Matrix3 U = svd.matrixU();
        U.col(2) = -U.col(2);
        R = U * svd.matrixV().transpose();
    }
    return R;
}

inline double orthonormality_error(const Matrix3 &C) {
    return (C * C.transpose() - Matrix3::Identity()).cwiseAbs().maxCoeff();
}

} // namespace stridenav::so3
