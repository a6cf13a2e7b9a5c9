#include <stridenav/so3.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace stridenav;
using so3::exp_map;
using so3::right_jacobian;
using so3::skew;

namespace {

Vector3 random_vector(std::mt19937_64 &rng, double max_norm) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vector3 v(u(rng), u(rng), u(rng));
    return v.normalized() * max_norm * std::abs(u(rng));
}

// Truncated power series sum_k K^k / k!, independent of Rodrigues.
Matrix3 exp_series(const Vector3 &phi, int terms) {
    const Matrix3 K = skew(phi);
    Matrix3 sum = Matrix3::Identity(), term = Matrix3::Identity();
    for (int k = 1; k < terms; ++k) {
        term = term * K / static_cast<double>(k);
        sum += term;
    }
    return sum;
}

double max_abs(const Matrix3 &m) { return m.cwiseAbs().maxCoeff(); }

} // namespace

TEST(Skew, CrossProductAndAntisymmetry) {
    EXPECT_EQ(skew(Vector3::UnitX()) * Vector3::UnitY(), Vector3::UnitZ());
    std::mt19937_64 rng(3);
    for (int i = 0; i < 100; ++i) {
        const Vector3 v = random_vector(rng, 5.0), w = random_vector(rng, 5.0);
        EXPECT_LT((skew(v) * w - v.cross(w)).norm(), 1e-14);
        EXPECT_EQ(skew(v).transpose(), -skew(v));
        EXPECT_LT((skew(v) * v).norm(), 1e-14);
        EXPECT_EQ(so3::unskew(skew(v)), v);
    }
}

TEST(ExpMap, IdentityAndHalfTurn) {
    EXPECT_EQ(exp_map(Vector3::Zero()), Matrix3::Identity());
    const Matrix3 half = exp_map(Vector3(kPi, 0.0, 0.0));
    EXPECT_LT(max_abs(half - Vector3(1.0, -1.0, -1.0).asDiagonal().toDenseMatrix()), 1e-15);
}

TEST(ExpMap, MatchesPowerSeries) {
    // 20 terms leave a tail below 1e-15 for |phi| <= 1.5.
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        const Vector3 phi = random_vector(rng, 1.5);
        EXPECT_LT(max_abs(exp_map(phi) - exp_series(phi, 20)), 1e-12);
    }
}

TEST(ExpMap, SeriesAndClosedFormAgreeAtThreshold) {
    const Vector3 axis = Vector3(1.0, -2.0, 0.5).normalized();
    for (double a : {0.5 * so3::kExpSeriesThreshold, 2.0 * so3::kExpSeriesThreshold}) {
        EXPECT_LT(max_abs(exp_map(a * axis) - exp_series(a * axis, 6)), 2.3e-16);
    }
    for (double a : {0.5 * so3::kJacobianSeriesThreshold, 2.0 * so3::kJacobianSeriesThreshold}) {
        // Closed form on the far side of the switch, evaluated by hand.
        const Vector3 phi = a * axis;
        const double sa = std::sin(a) / a;
        const Matrix3 closed = sa * Matrix3::Identity() + (1.0 - sa) * axis * axis.transpose() -
                               (1.0 - std::cos(a)) / a * skew(axis);
        EXPECT_LT(max_abs(right_jacobian(phi) - closed), 1e-12);
    }
}

TEST(ExpMap, StaysInSO3) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 200; ++i) {
        const Matrix3 C = exp_map(random_vector(rng, kPi));
        EXPECT_LT(so3::orthonormality_error(C), 1e-12);
        EXPECT_NEAR(C.determinant(), 1.0, 1e-12);
    }
}

TEST(RightJacobian, ZeroIsIdentity) { EXPECT_EQ(right_jacobian(Vector3::Zero()), Matrix3::Identity()); }

TEST(RightJacobian, FirstOrderPerturbationResidualIsQuadratic) {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 50; ++i) {
        const Vector3 phi = random_vector(rng, 2.5);
        const Vector3 dir = random_vector(rng, 1.0).normalized();
        auto residual = [&](double eps) {
            const Vector3 d = eps * dir;
            const Matrix3 lhs = exp_map(phi + d);
            return max_abs(lhs - exp_map(phi) * exp_map(right_jacobian(phi) * d));
        };
        const double r1 = residual(1e-4), r2 = residual(0.5e-4);
        EXPECT_LT(r1, 1e-7);
        EXPECT_NEAR(r1 / r2, 4.0, 0.5);
    }
}

TEST(RightJacobian, InverseComposesRightIncrement) {
    std::mt19937_64 rng(22);
    for (int i = 0; i < 50; ++i) {
        const Vector3 phi = random_vector(rng, 2.5);
        const Vector3 dir = random_vector(rng, 1.0).normalized();
        auto residual = [&](double eps) {
            const Vector3 d = eps * dir;
            return max_abs(exp_map(phi) * exp_map(d) - exp_map(phi + so3::right_jacobian_inverse(phi) * d));
        };
        const double r1 = residual(1e-4), r2 = residual(0.5e-4);
        EXPECT_LT(r1, 1e-7);
        EXPECT_NEAR(r1 / r2, 4.0, 0.5);
        EXPECT_LT(max_abs(right_jacobian(phi) * so3::right_jacobian_inverse(phi) - Matrix3::Identity()), 1e-12);
    }
}

TEST(Adjoint, LeftRotationMovesThroughAttitude) {
    std::mt19937_64 rng(31);
    for (int i = 0; i < 100; ++i) {
        const Vector3 phi = random_vector(rng, kPi);
        const Matrix3 C = exp_map(random_vector(rng, kPi));
        EXPECT_LT(max_abs(exp_map(phi) * C - C * exp_map(C.transpose() * phi)), 1e-12);
    }
}

TEST(LogMap, InvertsExpOnCanonicalRange) {
    std::mt19937_64 rng(41);
    for (int i = 0; i < 500; ++i) {
        const Vector3 phi = random_vector(rng, kPi - 1e-6);
        EXPECT_LT((so3::log_map(exp_map(phi)) - phi).norm(), 1e-10);
    }
    const Vector3 tiny(1e-9, -2e-9, 3e-9);
    EXPECT_LT((so3::log_map(exp_map(tiny)) - tiny).norm(), 1e-16);
    const Vector3 near_pi = (kPi - 1e-7) * Vector3(0.3, -0.4, 0.5).normalized();
    EXPECT_LT((so3::log_map(exp_map(near_pi)) - near_pi).norm(), 1e-9);
}

TEST(Orthonormalize, ProjectsPerturbedRotation) {
    std::mt19937_64 rng(51);
    const Matrix3 C = exp_map(random_vector(rng, 2.0));
    Matrix3 noisy = C;
    noisy(0, 1) += 1e-6;
    noisy(2, 2) -= 2e-6;
    const Matrix3 R = so3::orthonormalize(noisy);
    EXPECT_LT(so3::orthonormality_error(R), 1e-14);
    EXPECT_GT(R.determinant(), 0.0);
    EXPECT_LT(max_abs(R - C), 3e-6);
}
