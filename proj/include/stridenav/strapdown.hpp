// Earth-frame strapdown mechanization for a single foot-mounted IMU.
//
// One propagation step consumes two IMU half-intervals (three consecutive raw
// samples) and applies the two-sample coning/sculling correction.
#pragma once

#include <stridenav/attitude.hpp>
#include <stridenav/earth.hpp>
#include <stridenav/so3.hpp>

#include <array>
#include <span>

namespace stridenav {

struct ImuSample {
    double t = 0.0;
    Vector3 gyro = Vector3::Zero();  ///< omega_ib^b [rad/s]
    Vector3 accel = Vector3::Zero(); ///< specific force f^b [m/s^2]
    Foot foot = Foot::Left;
};

/// Angle and velocity increments over two consecutive half-intervals of
/// length T/2 each.
struct ImuIncrements {
    Vector3 dtheta1 = Vector3::Zero();
    Vector3 dtheta2 = Vector3::Zero();
    Vector3 dv1 = Vector3::Zero();
    Vector3 dv2 = Vector3::Zero();
    double T = 0.0;

    /// Remove constant gyro/accelerometer biases from each half-interval.
    ImuIncrements bias_corrected(const Vector3 &b_g, const Vector3 &b_a) const {
        ImuIncrements c = *this;
        c.dtheta1 -= 0.5 * T * b_g;
        c.dtheta2 -= 0.5 * T * b_g;
        c.dv1 -= 0.5 * T * b_a;
        c.dv2 -= 0.5 * T * b_a;
        return c;
    }
};

struct NavState {
    RotationMatrix C_be = RotationMatrix::Identity(); ///< body -> ECEF
    Vector3 v_e = Vector3::Zero();
    EcefPosition p_e = EcefPosition::Zero();
    Vector3 b_g = Vector3::Zero();
    Vector3 b_a = Vector3::Zero();
    double t = 0.0;
};

struct TwoSampleDelta {
    Vector3 dtheta;
    Vector3 dv;
};

/// Two-sample rotation and sculling compensated increments.
inline TwoSampleDelta two_sample_delta(const ImuIncrements &in) {
    TwoSampleDelta out;
    out.dtheta = in.dtheta1 + in.dtheta2;
    const Vector3 dv_sum = in.dv1 + in.dv2;
    out.dv = dv_sum + 0.5 * out.dtheta.cross(dv_sum) +
             (2.0 / 3.0) * (in.dtheta1.cross(in.dv2) + in.dv1.cross(in.dtheta2));
    return out;
}

/// Velocity increment resolved in the body frame at the start of the step,
/// integrating C(t) f(t) exactly (3-point Gauss-Legendre) for angular rate
/// and specific force linear in time, the profiles implied by the two
/// half-interval increments. To first order in the rotation angle this is the
/// two-sample sculling formula; the higher-order terms matter for the
/// large pitch rates of a swinging foot.
inline Vector3 linear_profile_velocity_delta(const ImuIncrements &in) {
    const double h = 0.5 * in.T;
    const Vector3 w_slope = (in.dtheta2 - in.dtheta1) / (h * h);
    const Vector3 w0 = in.dtheta1 / h - 0.5 * h * w_slope;
    const Vector3 f_slope = (in.dv2 - in.dv1) / (h * h);
    const Vector3 f0 = in.dv1 / h - 0.5 * h * f_slope;
    static constexpr std::array<double, 3> node{-0.7745966692414834, 0.0, 0.7745966692414834};
    static constexpr std::array<double, 3> weight{5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    Vector3 dv = Vector3::Zero();
    for (std::size_t q = 0; q < 3; ++q) {
        const double t = h * (1.0 + node[q]);
        const Vector3 angle = w0 * t + 0.5 * w_slope * t * t;
        dv += h * weight[q] * (so3::exp_map(angle) * (f0 + f_slope * t));
    }
    return dv;
}

/// Integrate three equally spaced raw samples into the two half-interval
/// increments of one propagation step, using the quadratic through the three
/// samples: first half h(5 f0 + 8 f1 - f2)/12, second half h(-f0 + 8 f1 + 5 f2)/12.
inline ImuIncrements increments_from_samples(const ImuSample &s0, const ImuSample &s1,
                                             const ImuSample &s2) {
    const double h1 = s1.t - s0.t, h2 = s2.t - s1.t;
    if (!(h1 > 0.0) || !(h2 > 0.0)) {
        throw PropagationError("increments_from_samples: timestamps must increase");
    }
    if (std::abs(h1 - h2) > 1e-6 * (h1 + h2)) {
        throw PropagationError("increments_from_samples: samples must be equally spaced");
    }
    const double h = 0.5 * (h1 + h2);
    auto first = [h](const Vector3 &f0, const Vector3 &f1, const Vector3 &f2) -> Vector3 {
        return h / 12.0 * (5.0 * f0 + 8.0 * f1 - f2);
    };
    ImuIncrements in;
    in.dtheta1 = first(s0.gyro, s1.gyro, s2.gyro);
    in.dtheta2 = first(s2.gyro, s1.gyro, s0.gyro);
    in.dv1 = first(s0.accel, s1.accel, s2.accel);
    in.dv2 = first(s2.accel, s1.accel, s0.accel);
    in.T = h1 + h2;
    return in;
}

/// Mean specific force over the step, resolved in ECEF: the velocity
/// increment that propagate() integrates, divided by T. Used to build the
/// error dynamics matrix.
inline Vector3 mean_specific_force_ecef(const NavState &s, const ImuIncrements &in) {
    if (!(in.T > 0.0)) return Vector3::Zero();
    const ImuIncrements c = in.bias_corrected(s.b_g, s.b_a);
    return s.C_be * linear_profile_velocity_delta(c) / in.T;
}

/// Advance one foot's navigation state by one update interval.
///
/// Attitude integrates body rate and the frame rotation of the Earth
/// separately: C <- exp(-Omega T) C exp(dtheta). Velocity includes the
/// e-frame rotation correction of the specific-force increment, Coriolis and
/// normal gravity at the mid-point; position is trapezoidal on velocity.
inline NavState propagate(const NavState &state, const ImuIncrements &incr,
                          const EarthModel &earth = EarthModel::wgs84()) {
    if (incr.T == 0.0) return state;
    if (!(incr.T > 0.0) || !std::isfinite(incr.T) || !incr.dtheta1.allFinite() ||
        !incr.dtheta2.allFinite() || !incr.dv1.allFinite() || !incr.dv2.allFinite()) {
        throw PropagationError("propagate: invalid IMU increments");
    }
    const double T = incr.T;
    const Vector3 omega = earth.omega_ie();
    const ImuIncrements c = incr.bias_corrected(state.b_g, state.b_a);
    const TwoSampleDelta d{c.dtheta1 + c.dtheta2, linear_profile_velocity_delta(c)};

    NavState next = state;
    next.C_be = so3::exp_map(-T * omega) * state.C_be * so3::exp_map(d.dtheta);
    // First-order re-orthonormalization keeps the attitude in SO(3).
    next.C_be -= 0.5 * (next.C_be * next.C_be.transpose() - Matrix3::Identity()) * next.C_be;

    const Vector3 dv_sf = state.C_be * d.dv;
    const Vector3 dv_e = dv_sf - 0.5 * T * omega.cross(dv_sf);

    // Predictor pass for the mid-point velocity, then the corrected step.
    Vector3 v1 = state.v_e + dv_e +
                 (gravity_ecef(state.p_e + 0.5 * T * state.v_e, earth) - 2.0 * omega.cross(state.v_e)) * T;
    const Vector3 v_mid = 0.5 * (state.v_e + v1);
    v1 = state.v_e + dv_e +
         (gravity_ecef(state.p_e + 0.5 * T * v_mid, earth) - 2.0 * omega.cross(v_mid)) * T;

    next.v_e = v1;
    next.p_e = state.p_e + 0.5 * T * (state.v_e + v1);
    next.t = state.t + T;
    if (!next.C_be.allFinite() || !next.v_e.allFinite() || !next.p_e.allFinite()) {
        throw PropagationError("propagate: non-finite navigation state");
    }
    return next;
}

/// Build the nav state for a given geodetic position and Euler attitude.
inline NavState make_nav_state(const GeodeticPosition &pos, const EulerAngles &att,
                               const EarthModel &earth = EarthModel::wgs84()) {
    NavState s;
    s.C_be = n_to_e_rotation(pos) * body_to_nav(att);
    s.p_e = geodetic_to_ecef(pos, earth);
    return s;
}

constexpr double kMinInitWindow = 1.0; // [s]

/// Coarse alignment from a stationary window: roll/pitch from the mean
/// specific force, yaw from the configured heading, gyro bias from the mean
/// rate minus the projected Earth rate. Velocity and accelerometer bias start
/// at zero.
inline NavState initialize(std::span<const ImuSample> stationary, const GeodeticPosition &p0,
                           double heading0, const EarthModel &earth = EarthModel::wgs84()) {
    if (stationary.size() < 2 || stationary.back().t - stationary.front().t < kMinInitWindow) {
        throw UsageError("initialize: need at least 1 s of stationary samples");
    }
    Vector3 gyro_mean = Vector3::Zero(), accel_mean = Vector3::Zero();
    for (const auto &s : stationary) {
        gyro_mean += s.gyro;
        accel_mean += s.accel;
    }
    gyro_mean /= static_cast<double>(stationary.size());
    accel_mean /= static_cast<double>(stationary.size());
    if (accel_mean.norm() < 1e-6) throw UsageError("initialize: no specific force to level from");

    const Vector3 up_b = accel_mean.normalized();
    EulerAngles att;
    att.pitch = std::asin(std::clamp(up_b.x(), -1.0, 1.0));
    att.roll = std::atan2(-up_b.z(), up_b.y());
    att.yaw = heading0;

    NavState s = make_nav_state(p0, att, earth);
    s.b_g = gyro_mean - s.C_be.transpose() * earth.omega_ie();
    s.t = stationary.back().t;
    return s;
}

} // namespace stridenav
