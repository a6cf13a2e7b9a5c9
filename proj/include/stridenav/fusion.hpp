// Dual-foot error-state Kalman filter in the Earth frame.
//
// Per-foot error vector (15 states), in this order:
//   dpsi  attitude error, C_e^b(est) ~= C_e^b (I + dpsi x)
//   dv    velocity error, estimate minus truth
//   dp    position error, estimate minus truth
//   bg    gyro bias error, truth minus estimate
//   ba    accelerometer bias error, truth minus estimate
// The joint state stacks [left; right] (30 states).
//
// The bias entries follow the sign pattern of the error dynamics (-C_b^e in
// the gyro column, +C_b^e in the accelerometer column), which makes them
// "truth minus estimate"; injection therefore adds them to the biases.
#pragma once

#include <stridenav/earth.hpp>
#include <stridenav/so3.hpp>
#include <stridenav/strapdown.hpp>

#include <Eigen/Eigenvalues>

#include <optional>

namespace stridenav {

constexpr int kFootStates = 15;
constexpr int kJointStates = 30;

using Matrix15 = Eigen::Matrix<double, kFootStates, kFootStates>;
using Matrix15x12 = Eigen::Matrix<double, kFootStates, 12>;
using Matrix30 = Eigen::Matrix<double, kJointStates, kJointStates>;
using Vector30 = Eigen::Matrix<double, kJointStates, 1>;

namespace idx {
constexpr int att = 0, vel = 3, pos = 6, bg = 9, ba = 12;
inline int foot_offset(Foot f) { return f == Foot::Left ? 0 : kFootStates; }
} // namespace idx

struct ErrorState {
    Vector3 dpsi_e = Vector3::Zero();
    Vector3 dv_e = Vector3::Zero();
    Vector3 dp_e = Vector3::Zero();
    Vector3 b_g = Vector3::Zero();
    Vector3 b_a = Vector3::Zero();

    Eigen::Matrix<double, kFootStates, 1> to_vector() const {
        Eigen::Matrix<double, kFootStates, 1> x;
        x << dpsi_e, dv_e, dp_e, b_g, b_a;
        return x;
    }
    static ErrorState from_vector(const Eigen::Ref<const Eigen::Matrix<double, kFootStates, 1>> &x) {
        return {x.segment<3>(idx::att), x.segment<3>(idx::vel), x.segment<3>(idx::pos),
                x.segment<3>(idx::bg), x.segment<3>(idx::ba)};
    }
};

/// Continuous noise densities and measurement sigmas.
struct NoiseConfig {
    double sigma_g = 0.5 * kDeg / 60.0;  ///< gyro white noise [rad/s/sqrt(Hz)]
    double sigma_a = 0.001 / 60.0;       ///< accel white noise [m/s^2/sqrt(Hz)]
    double sigma_bg = 1e-6;              ///< gyro bias random walk [rad/s/sqrt(s)]
    double sigma_ba = 1e-5;              ///< accel bias random walk [m/s^2/sqrt(s)]
    double sigma_v = 0.05;               ///< ZUPT [m/s]
    double sigma_d = 0.05;               ///< inter-foot range [m]
    double sigma_ec = 1e-7;              ///< ellipsoid residual [-]

    void validate() const {
        for (double s : {sigma_g, sigma_a, sigma_bg, sigma_ba, sigma_v, sigma_d, sigma_ec}) {
            if (!(s > 0.0)) throw UsageError("NoiseConfig: all sigmas must be positive");
        }
    }
};

struct RangeSample {
    double t = 0.0;
    double d = 0.0;                    ///< measured distance [m]
    Vector3 lever_L = Vector3::Zero(); ///< transducer offset, left body frame [m]
    Vector3 lever_R = Vector3::Zero(); ///< transducer offset, right body frame [m]
};

struct JointState {
    NavState left;
    NavState right;
    Matrix30 P = Matrix30::Zero();

    NavState &foot(Foot f) { return f == Foot::Left ? left : right; }
    const NavState &foot(Foot f) const { return f == Foot::Left ? left : right; }
};

/// Initial one-sigma uncertainties. Attitude and position sigmas are given
/// per local NUE axis and rotated into ECEF.
struct InitialUncertainty {
    double level_rad = 2.0 * kDeg;
    double heading_rad = 5.0 * kDeg;
    double velocity = 0.01;
    double position = 0.01;
    double gyro_bias = 1.0 * kDeg;
    double accel_bias = 0.3;
};

inline Matrix15 initial_foot_covariance(const NavState &s, const InitialUncertainty &u,
                                        const EarthModel &earth = EarthModel::wgs84()) {
    const RotationMatrix C_ne = n_to_e_rotation(ecef_to_geodetic(s.p_e, earth));
    const Vector3 att_var(u.level_rad * u.level_rad, u.heading_rad * u.heading_rad,
                          u.level_rad * u.level_rad);
    Matrix15 P = Matrix15::Zero();
    P.block<3, 3>(idx::att, idx::att) = C_ne * att_var.asDiagonal() * C_ne.transpose();
    P.block<3, 3>(idx::vel, idx::vel) = Matrix3::Identity() * u.velocity * u.velocity;
    P.block<3, 3>(idx::pos, idx::pos) = Matrix3::Identity() * u.position * u.position;
    P.block<3, 3>(idx::bg, idx::bg) = Matrix3::Identity() * u.gyro_bias * u.gyro_bias;
    P.block<3, 3>(idx::ba, idx::ba) = Matrix3::Identity() * u.accel_bias * u.accel_bias;
    return P;
}

inline JointState make_joint_state(const NavState &left, const NavState &right,
                                   const InitialUncertainty &u,
                                   const EarthModel &earth = EarthModel::wgs84()) {
    JointState js{left, right, Matrix30::Zero()};
    js.P.topLeftCorner<15, 15>() = initial_foot_covariance(left, u, earth);
    js.P.bottomRightCorner<15, 15>() = initial_foot_covariance(right, u, earth);
    return js;
}

/// Continuous-time error dynamics f for one foot. f_e is the specific force
/// resolved in ECEF.
inline Matrix15 error_dynamics(const NavState &s, const Vector3 &f_e,
                               const EarthModel &earth = EarthModel::wgs84()) {
    const Matrix3 Wx = so3::skew(earth.omega_ie());
    Matrix15 F = Matrix15::Zero();
    F.block<3, 3>(idx::att, idx::att) = -Wx;
    F.block<3, 3>(idx::att, idx::bg) = -s.C_be;
    F.block<3, 3>(idx::vel, idx::att) = so3::skew(f_e);
    F.block<3, 3>(idx::vel, idx::vel) = -2.0 * Wx;
    F.block<3, 3>(idx::vel, idx::ba) = s.C_be;
    F.block<3, 3>(idx::pos, idx::vel) = Matrix3::Identity();
    return F;
}

/// Noise input matrix d for w = [n_g; n_a; n_bg; n_ba].
inline Matrix15x12 noise_input(const NavState &s) {
    Matrix15x12 D = Matrix15x12::Zero();
    D.block<3, 3>(idx::att, 0) = -s.C_be;
    D.block<3, 3>(idx::vel, 3) = s.C_be;
    D.block<3, 3>(idx::bg, 6) = Matrix3::Identity();
    D.block<3, 3>(idx::ba, 9) = Matrix3::Identity();
    return D;
}

struct FootModel {
    Matrix15 F = Matrix15::Zero();
    Matrix15x12 D = Matrix15x12::Zero();
};

inline FootModel foot_model(const NavState &s, const Vector3 &f_e,
                            const EarthModel &earth = EarthModel::wgs84()) {
    return {error_dynamics(s, f_e, earth), noise_input(s)};
}

/// Cheap sanity check run on every prediction; the full eigenvalue test is
/// covariance_is_psd().
inline void check_covariance_cheap(const Matrix30 &P) {
    if (!P.allFinite()) throw DivergenceError("covariance has non-finite entries");
    const double tol = 1e-12 * std::max(1.0, P.trace());
    if (P.diagonal().minCoeff() < -tol) throw DivergenceError("covariance has a negative variance");
}

inline bool covariance_is_psd(const Matrix30 &P) {
    const double scale = std::max(P.cwiseAbs().maxCoeff(), 1e-300);
    if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) return false;
    Eigen::SelfAdjointEigenSolver<Matrix30> es(P, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= -1e-12 * std::max(P.trace(), 1e-300);
}

/// First-order discretization: Phi = I + F dt, Q_d = D W D^T dt.
inline void predict(JointState &js, const FootModel &left, const FootModel &right, double dt,
                    const NoiseConfig &noise) {
    if (!(dt > 0.0)) throw UsageError("predict: dt must be positive");
    Eigen::Matrix<double, 12, 1> w;
    w << Vector3::Constant(noise.sigma_g * noise.sigma_g), Vector3::Constant(noise.sigma_a * noise.sigma_a),
        Vector3::Constant(noise.sigma_bg * noise.sigma_bg), Vector3::Constant(noise.sigma_ba * noise.sigma_ba);

    const Matrix15 phi_l = Matrix15::Identity() + left.F * dt;
    const Matrix15 phi_r = Matrix15::Identity() + right.F * dt;
    const Matrix15 ll = js.P.topLeftCorner<15, 15>();
    const Matrix15 lr = js.P.topRightCorner<15, 15>();
    const Matrix15 rr = js.P.bottomRightCorner<15, 15>();

    js.P.topLeftCorner<15, 15>() = phi_l * ll * phi_l.transpose() + left.D * w.asDiagonal() * left.D.transpose() * dt;
    js.P.bottomRightCorner<15, 15>() =
        phi_r * rr * phi_r.transpose() + right.D * w.asDiagonal() * right.D.transpose() * dt;
    js.P.topRightCorner<15, 15>() = phi_l * lr * phi_r.transpose();
    js.P.bottomLeftCorner<15, 15>() = js.P.topRightCorner<15, 15>().transpose();
    js.P = 0.5 * (js.P + js.P.transpose()).eval();
    check_covariance_cheap(js.P);
}

constexpr double kMaxInjectAngle = 0.5; // [rad]

/// Fold an estimated error vector into both nominal states. The covariance
/// is left untouched; the error state is implicitly reset to zero.
inline void inject_and_reset(JointState &js, const Vector30 &dX) {
    for (Foot f : {Foot::Left, Foot::Right}) {
        const auto e = ErrorState::from_vector(dX.segment<kFootStates>(idx::foot_offset(f)));
        if (e.dpsi_e.norm() >= kMaxInjectAngle) {
            throw DivergenceError("inject_and_reset: attitude correction exceeds small-angle range");
        }
        NavState &s = js.foot(f);
        s.C_be = so3::exp_map(e.dpsi_e) * s.C_be;
        s.v_e -= e.dv_e;
        s.p_e -= e.dp_e;
        s.b_g += e.b_g;
        s.b_a += e.b_a;
    }
}

enum class UpdateStatus { Applied, Gated, Skipped };

struct UpdateResult {
    UpdateStatus status = UpdateStatus::Skipped;
    Eigen::VectorXd innovation;  ///< measured minus predicted
    double mahalanobis = 0.0;
};

/// Chi-square 99.9% quantiles for 1..6 degrees of freedom.
inline double chi2_999(int dof) {
    static constexpr double table[] = {10.828, 13.816, 16.266, 18.467, 20.515, 22.458};
    return table[std::clamp(dof, 1, 6) - 1];
}

struct UpdateOptions {
    bool gating = false;
};

/// Generic linear(ized) update. innovation = z - h(x_est); the error
/// estimate is -K * innovation (error = estimate - truth), folded in by
/// inject_and_reset. Joseph form keeps P symmetric PSD.
template <int M>
UpdateResult apply_update(JointState &js, const Eigen::Matrix<double, M, kJointStates> &H,
                          const Eigen::Matrix<double, M, 1> &innovation,
                          const Eigen::Matrix<double, M, M> &R, const UpdateOptions &opt) {
    using MatM = Eigen::Matrix<double, M, M>;
    UpdateResult res;
    res.innovation = innovation;
    const Eigen::Matrix<double, kJointStates, M> PHt = js.P * H.transpose();
    const MatM S = H * PHt + R;
    const Eigen::LDLT<MatM> S_ldlt(S);
    res.mahalanobis = innovation.dot(S_ldlt.solve(innovation));
    if (opt.gating && res.mahalanobis > chi2_999(M)) {
        res.status = UpdateStatus::Gated;
        return res;
    }
    const Eigen::Matrix<double, kJointStates, M> K = S_ldlt.solve(PHt.transpose()).transpose();
    const Vector30 dX = -K * innovation;
    const Matrix30 IKH = Matrix30::Identity() - K * H;
    js.P = IKH * js.P * IKH.transpose() + K * R * K.transpose();
    js.P = 0.5 * (js.P + js.P.transpose()).eval();
    inject_and_reset(js, dX);
    res.status = UpdateStatus::Applied;
    return res;
}

inline Eigen::Matrix<double, 3, kJointStates> zupt_jacobian(Foot f) {
    Eigen::Matrix<double, 3, kJointStates> H = Eigen::Matrix<double, 3, kJointStates>::Zero();
    H.block<3, 3>(0, idx::foot_offset(f) + idx::vel) = Matrix3::Identity();
    return H;
}

/// Zero-velocity pseudo-measurement for one foot.
inline UpdateResult update_zupt(JointState &js, Foot foot, const NoiseConfig &noise,
                                const UpdateOptions &opt = {}) {
    const Vector3 innovation = -js.foot(foot).v_e;
    const Matrix3 R = Matrix3::Identity() * noise.sigma_v * noise.sigma_v;
    return apply_update<3>(js, zupt_jacobian(foot), innovation, R, opt);
}

/// Both feet stationary at the same epoch, stacked into one 6-row update.
inline UpdateResult update_zupt_both(JointState &js, const NoiseConfig &noise,
                                     const UpdateOptions &opt = {}) {
    Eigen::Matrix<double, 6, kJointStates> H;
    H << zupt_jacobian(Foot::Left), zupt_jacobian(Foot::Right);
    Eigen::Matrix<double, 6, 1> innovation;
    innovation << -js.left.v_e, -js.right.v_e;
    const Eigen::Matrix<double, 6, 6> R =
        Eigen::Matrix<double, 6, 6>::Identity() * noise.sigma_v * noise.sigma_v;
    return apply_update<6>(js, H, innovation, R, opt);
}

constexpr double kMinRangeBaseline = 0.05; // [m]

/// Transducer-to-transducer vector p_L + C_L l_L - p_R - C_R l_R.
inline Vector3 range_baseline(const JointState &js, const Vector3 &lever_L, const Vector3 &lever_R) {
    return js.left.p_e + js.left.C_be * lever_L - js.right.p_e - js.right.C_be * lever_R;
}

inline Eigen::Matrix<double, 1, kJointStates> range_jacobian(const JointState &js, const RangeSample &r) {
    const Vector3 dl = range_baseline(js, r.lever_L, r.lever_R);
    const double n = dl.norm();
    Eigen::Matrix<double, 1, kJointStates> H = Eigen::Matrix<double, 1, kJointStates>::Zero();
    const int L = idx::foot_offset(Foot::Left), R = idx::foot_offset(Foot::Right);
    H.block<1, 3>(0, L + idx::att) = dl.transpose() * so3::skew(js.left.C_be * r.lever_L) / n;
    H.block<1, 3>(0, L + idx::pos) = dl.transpose() / n;
    H.block<1, 3>(0, R + idx::att) = -dl.transpose() * so3::skew(js.right.C_be * r.lever_R) / n;
    H.block<1, 3>(0, R + idx::pos) = -dl.transpose() / n;
    return H;
}

/// Inter-foot distance update. Skipped when the predicted baseline is too
/// short for its direction to be meaningful.
inline UpdateResult update_range(JointState &js, const RangeSample &r, const NoiseConfig &noise,
                                 const UpdateOptions &opt = {}) {
    const Vector3 dl = range_baseline(js, r.lever_L, r.lever_R);
    UpdateResult res;
    if (dl.norm() <= kMinRangeBaseline) {
        res.status = UpdateStatus::Skipped;
        return res;
    }
    Eigen::Matrix<double, 1, 1> innovation;
    innovation << r.d - dl.norm();
    Eigen::Matrix<double, 1, 1> R;
    R << noise.sigma_d * noise.sigma_d;
    return apply_update<1>(js, range_jacobian(js, r), innovation, R, opt);
}

/// Semi-axes of the ellipsoid through the anchor stance position:
/// (x^2 + y^2)/A^2 + z^2/B^2 = 1 with A = R_E + h, B = R_E (1 - e^2) + h.
struct AnchorEllipsoid {
    double A = 0.0;
    double B = 0.0;

    static AnchorEllipsoid at(const GeodeticPosition &anchor, const EarthModel &earth) {
        const double RE = earth.transverse_radius(anchor.latitude);
        return {RE + anchor.height, RE * (1.0 - earth.e2()) + anchor.height};
    }
    double value(const Vector3 &p) const {
        return (p.x() * p.x() + p.y() * p.y()) / (A * A) + p.z() * p.z() / (B * B);
    }
    Eigen::RowVector3d gradient(const Vector3 &p) const {
        return {2.0 * p.x() / (A * A), 2.0 * p.y() / (A * A), 2.0 * p.z() / (B * B)};
    }
};

inline double ellipsoid_innovation(const Vector3 &p, const GeodeticPosition &anchor,
                                   const EarthModel &earth = EarthModel::wgs84()) {
    return 1.0 - AnchorEllipsoid::at(anchor, earth).value(p);
}

inline Eigen::Matrix<double, 1, kJointStates> ellipsoid_jacobian(const Vector3 &p, Foot foot,
                                                                 const GeodeticPosition &anchor,
                                                                 const EarthModel &earth) {
    Eigen::Matrix<double, 1, kJointStates> H = Eigen::Matrix<double, 1, kJointStates>::Zero();
    H.block<1, 3>(0, idx::foot_offset(foot) + idx::pos) = AnchorEllipsoid::at(anchor, earth).gradient(p);
    return H;
}

/// Keep the foot on the ellipsoid through its previous stance position.
inline UpdateResult update_ellipsoid(JointState &js, Foot foot, const GeodeticPosition &anchor,
                                     const NoiseConfig &noise,
                                     const EarthModel &earth = EarthModel::wgs84(),
                                     const UpdateOptions &opt = {}) {
    const Vector3 p = js.foot(foot).p_e;
    Eigen::Matrix<double, 1, 1> innovation;
    innovation << ellipsoid_innovation(p, anchor, earth);
    Eigen::Matrix<double, 1, 1> R;
    R << noise.sigma_ec * noise.sigma_ec;
    return apply_update<1>(js, ellipsoid_jacobian(p, foot, anchor, earth), innovation, R, opt);
}

} // namespace stridenav
