// Synthetic dual-foot walking: ground truth, IMU outputs and inter-foot
// ranges for a square walk.
//
// Each step is a swing of duration t_u followed by a stance of t_s. During a
// swing the foot moves along the current heading in the tangent plane of its
// previous stance position; pitch follows a raised cosine. Corners are 90
// degree right turns in place. The right foot runs the same plan delayed by
// half a gait period.
//
// Sensor outputs are exact for the Earth-frame mechanization: the gyro sees
// the body rate relative to the local level frame, the transport rate of that
// frame and Earth rotation; the accelerometer sees ECEF acceleration plus
// Coriolis minus normal gravity.
#pragma once

#include <stridenav/attitude.hpp>
#include <stridenav/earth.hpp>
#include <stridenav/fusion.hpp>
#include <stridenav/strapdown.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <vector>

namespace stridenav {

/// White-noise densities and bias random walks used to corrupt simulated
/// sensors. Zero disables a term.
struct SensorNoise {
    double gyro_density = 0.5 * kDeg / 60.0; ///< [rad/s/sqrt(Hz)]
    double accel_density = 0.001 / 60.0;     ///< [m/s^2/sqrt(Hz)]
    double gyro_bias_walk = 0.0;             ///< [rad/s/sqrt(s)]
    double accel_bias_walk = 0.0;            ///< [m/s^2/sqrt(s)]
    double range_sigma = 0.02;               ///< [m]

    static SensorNoise none() { return {0.0, 0.0, 0.0, 0.0, 0.0}; }
};

struct GaitParams {
    double stride_length = 1.3; ///< l_s [m]
    double max_height = 0.14;   ///< l_h [m]
    double swing_time = 0.8;    ///< t_u [s]
    double stance_time = 0.4;   ///< t_s [s]
    double turn_pause = 0.0;    ///< t_o, extra stance after each turn [s]
    double turn_time = 0.2;     ///< t_r [s]
    double max_pitch = 0.55;    ///< theta_max [rad]
    double heading0 = 0.0;      ///< psi_0 [rad]
    double imu_rate = 100.0;    ///< [Hz]
    double range_rate = 10.0;   ///< [Hz]
    double initial_standstill = 2.0; ///< both feet still before the walk [s]
    double final_standstill = 2.0;   ///< both feet still after the walk [s]
    bool earth_rotation = true;
    GeodeticPosition start{31.0 * kDeg, 121.0 * kDeg, 0.0};
    SensorNoise noise;
    std::array<Vector3, 2> gyro_bias{Vector3::Zero(), Vector3::Zero()};  ///< [L, R] rad/s
    std::array<Vector3, 2> accel_bias{Vector3::Zero(), Vector3::Zero()}; ///< [L, R] m/s^2
    std::array<Vector3, 2> lever_arm{Vector3(0.02, 0.05, -0.03), Vector3(0.03, -0.03, 0.04)};

    double period() const { return swing_time + stance_time; }

    void validate() const {
        for (double d : {stride_length, swing_time, stance_time, turn_time, imu_rate, range_rate}) {
            if (!(d > 0.0)) throw UsageError("GaitParams: durations, stride and rates must be positive");
        }
        if (turn_pause < 0.0 || initial_standstill < 0.0 || final_standstill < 0.0 || max_height < 0.0) {
            throw UsageError("GaitParams: pauses and heights must be non-negative");
        }
        const double ratio = imu_rate / range_rate;
        if (std::abs(ratio - std::round(ratio)) > 1e-9) {
            throw UsageError("GaitParams: imu_rate must be a multiple of range_rate");
        }
    }
};

struct SwingKinematics {
    Vector3 delta_p; ///< NUE displacement from the stance position [m]
    Vector3 v;       ///< NUE velocity [m/s]
    Vector3 a;       ///< NUE acceleration [m/s^2]
    double pitch = 0.0;
    double pitch_rate = 0.0;
};

/// Raised-cosine swing along heading psi.
inline SwingKinematics swing_kinematics(double tau, const GaitParams &p, double heading) {
    if (tau < 0.0 || tau > p.swing_time) throw UsageError("swing_kinematics: tau outside [0, t_u]");
    const double w1 = kPi / p.swing_time, w2 = 2.0 * kPi / p.swing_time;
    const double c = std::cos(heading), s = std::sin(heading);
    const double horiz = p.stride_length * (1.0 - std::cos(w1 * tau)) / 2.0;
    const double horiz_v = p.stride_length * w1 * std::sin(w1 * tau) / 2.0;
    const double horiz_a = p.stride_length * w1 * w1 * std::cos(w1 * tau) / 2.0;
    SwingKinematics k;
    k.delta_p = {horiz * c, p.max_height * (1.0 - std::cos(w2 * tau)) / 2.0, horiz * s};
    k.v = {horiz_v * c, p.max_height * w2 * std::sin(w2 * tau) / 2.0, horiz_v * s};
    k.a = {horiz_a * c, p.max_height * w2 * w2 * std::cos(w2 * tau) / 2.0, horiz_a * s};
    k.pitch = p.max_pitch * (1.0 - std::cos(w2 * tau)) / 2.0;
    k.pitch_rate = p.max_pitch * w2 * std::sin(w2 * tau) / 2.0;
    return k;
}

inline SwingKinematics swing_kinematics(double tau, const GaitParams &p) {
    return swing_kinematics(tau, p, p.heading0);
}

/// Heading during a 90 degree right turn that started at heading psi0.
inline double turn_kinematics(double tau, double turn_time, double psi0) {
    if (tau < 0.0 || tau > turn_time) throw UsageError("turn_kinematics: tau outside [0, t_r]");
    return kPi * (1.0 - std::cos(kPi * tau / turn_time)) / 4.0 + psi0;
}

inline double turn_rate(double tau, double turn_time) {
    return kPi * kPi / (4.0 * turn_time) * std::sin(kPi * tau / turn_time);
}

/// Right foot start: half a stride forward and half a stride to the side of
/// the left foot, offset (l_s/2 (cos+sin), 0, l_s/2 (cos-sin)) in the left
/// foot's NUE frame.
inline Vector3 right_foot_offset(double psi0, double stride) {
    return {stride / 2.0 * (std::cos(psi0) + std::sin(psi0)), 0.0,
            stride / 2.0 * (std::cos(psi0) - std::sin(psi0))};
}

inline GeodeticPosition right_foot_init(double psi0, double stride, const GeodeticPosition &left0,
                                        const EarthModel &earth = EarthModel::wgs84()) {
    return tangent_offset_to_position(right_foot_offset(psi0, stride), left0, earth);
}

/// Ground truth for one foot at one instant.
struct FootTruth {
    GeodeticPosition pos;
    EcefPosition p_e = EcefPosition::Zero();
    Vector3 v_e = Vector3::Zero();
    Vector3 a_e = Vector3::Zero();
    Vector3 v_n = Vector3::Zero();       ///< local NUE velocity
    EulerAngles euler;                   ///< w.r.t. local NUE
    Vector3 omega_nb_b = Vector3::Zero(); ///< body rate w.r.t. local level frame
    bool stance = false;
};

struct TruthSample {
    double t = 0.0;
    std::array<FootTruth, 2> feet; ///< [L, R]
};

enum class SegmentKind { Stance, Swing, Turn };

struct Segment {
    SegmentKind kind = SegmentKind::Stance;
    double t0 = 0.0;
    double duration = 0.0;
    double heading = 0.0;       ///< heading at segment start
    EcefPosition anchor_e;      ///< foot position at segment start
    GeodeticPosition anchor;
    RotationMatrix anchor_C_ne; ///< NUE -> ECEF at the anchor
};

/// Piecewise gait plan for one foot with exact kinematics at any time.
class FootPath {
  public:
    FootPath(const GaitParams &p, const GeodeticPosition &start, double delay, int side_strides,
             int laps, double t_end, const EarthModel &earth)
        : params_(p), earth_(earth) {
        double t = 0.0;
        double heading = p.heading0;
        EcefPosition pos_e = geodetic_to_ecef(start, earth);
        auto push = [&](SegmentKind kind, double duration) {
            Segment s;
            s.kind = kind;
            s.t0 = t;
            s.duration = duration;
            s.heading = heading;
            s.anchor_e = pos_e;
            s.anchor = ecef_to_geodetic(pos_e, earth);
            s.anchor_C_ne = n_to_e_rotation(s.anchor);
            segments_.push_back(s);
            t += duration;
            if (kind == SegmentKind::Swing) {
                pos_e = s.anchor_e + s.anchor_C_ne * swing_kinematics(p.swing_time, p, heading).delta_p;
            } else if (kind == SegmentKind::Turn) {
                heading += kPi / 2.0;
            }
        };
        if (delay > 0.0) push(SegmentKind::Stance, delay);
        for (int lap = 0; lap < laps; ++lap) {
            for (int side = 0; side < 4; ++side) {
                for (int k = 0; k < side_strides; ++k) {
                    push(SegmentKind::Swing, p.swing_time);
                    push(SegmentKind::Stance, p.stance_time);
                }
                push(SegmentKind::Turn, p.turn_time);
                if (p.turn_pause > 0.0) push(SegmentKind::Stance, p.turn_pause);
            }
        }
        push(SegmentKind::Stance, std::max(t_end - t, 0.0) + 1.0);
    }

    const std::vector<Segment> &segments() const { return segments_; }

    /// Truth at time t. Acceleration and body rate jump at segment
    /// boundaries; a sample on a boundary takes the mean of both one-sided
    /// limits, which keeps trapezoidal integration of the sensor outputs
    /// second-order accurate across the jump.
    FootTruth at(double t) const {
        auto it = std::upper_bound(segments_.begin(), segments_.end(), t,
                                   [](double v, const Segment &s) { return v < s.t0; });
        std::size_t k = it == segments_.begin() ? 0 : static_cast<std::size_t>(it - segments_.begin()) - 1;
        if (k + 1 < segments_.size() && std::abs(t - segments_[k + 1].t0) < kBoundaryTol) ++k;
        FootTruth ft = evaluate(segments_[k], t - segments_[k].t0);
        if (k > 0 && std::abs(t - segments_[k].t0) < kBoundaryTol) {
            const FootTruth left = evaluate(segments_[k - 1], segments_[k - 1].duration);
            ft.a_e = 0.5 * (ft.a_e + left.a_e);
            ft.omega_nb_b = 0.5 * (ft.omega_nb_b + left.omega_nb_b);
        }
        return ft;
    }

  private:
    static constexpr double kBoundaryTol = 1e-9;

    FootTruth evaluate(const Segment &seg, double t_rel) const {
        const double tau = std::clamp(t_rel, 0.0, seg.duration);

        FootTruth ft;
        ft.euler.yaw = seg.heading;
        ft.p_e = seg.anchor_e;
        switch (seg.kind) {
        case SegmentKind::Stance:
            ft.stance = true;
            break;
        case SegmentKind::Swing: {
            const SwingKinematics k = swing_kinematics(tau, params_, seg.heading);
            ft.p_e = seg.anchor_e + seg.anchor_C_ne * k.delta_p;
            ft.v_e = seg.anchor_C_ne * k.v;
            ft.a_e = seg.anchor_C_ne * k.a;
            ft.euler.pitch = k.pitch;
            ft.omega_nb_b = Vector3(0.0, 0.0, k.pitch_rate);
            break;
        }
        case SegmentKind::Turn:
            ft.euler.yaw = turn_kinematics(tau, seg.duration, seg.heading);
            ft.omega_nb_b = Vector3(0.0, -turn_rate(tau, seg.duration), 0.0);
            break;
        }
        ft.pos = seg.kind == SegmentKind::Swing ? ecef_to_geodetic(ft.p_e, earth_) : seg.anchor;
        ft.v_n = n_to_e_rotation(ft.pos).transpose() * ft.v_e;
        return ft;
    }

    GaitParams params_;
    EarthModel earth_;
    std::vector<Segment> segments_;
};

/// Transport rate of the local NUE frame for a given NUE velocity.
inline Vector3 transport_rate_nue(const GeodeticPosition &pos, const Vector3 &v_n, const EarthModel &earth) {
    const double lat_rate = v_n.x() / (earth.meridian_radius(pos.latitude) + pos.height);
    const double lon_rate =
        v_n.z() / ((earth.transverse_radius(pos.latitude) + pos.height) * std::cos(pos.latitude));
    return {lon_rate * std::cos(pos.latitude), lon_rate * std::sin(pos.latitude), -lat_rate};
}

/// Body -> ECEF attitude of a truth sample.
inline RotationMatrix truth_attitude(const FootTruth &ft) {
    return n_to_e_rotation(ft.pos) * body_to_nav(ft.euler);
}

/// Error-free gyro and accelerometer outputs implied by a truth sample.
inline std::pair<Vector3, Vector3> ideal_imu(const FootTruth &ft, bool earth_rotation,
                                             const EarthModel &earth) {
    const RotationMatrix C_ne = n_to_e_rotation(ft.pos);
    const RotationMatrix C_bn = body_to_nav(ft.euler);
    const Vector3 omega_ie = earth_rotation ? earth.omega_ie() : Vector3::Zero();
    const Vector3 omega_in_n = C_ne.transpose() * omega_ie + transport_rate_nue(ft.pos, ft.v_n, earth);
    const Vector3 gyro = ft.omega_nb_b + C_bn.transpose() * omega_in_n;
    const Vector3 f_e = ft.a_e + 2.0 * omega_ie.cross(ft.v_e) - gravity_ecef(ft.p_e, earth);
    const Vector3 accel = (C_ne * C_bn).transpose() * f_e;
    return {gyro, accel};
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), 0x5eedu};
    return std::mt19937_64(seq);
}

/// IMU outputs for one foot: ideal outputs plus bias (optionally walking) and
/// white noise from a seeded generator.
inline std::vector<ImuSample> synthesize_imu(const std::vector<TruthSample> &truth, const GaitParams &p,
                                             Foot foot, std::uint64_t seed,
                                             const EarthModel &earth = EarthModel::wgs84()) {
    const int fi = foot_index(foot);
    auto rng = make_rng(seed, 1 + fi);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sg = p.noise.gyro_density * std::sqrt(p.imu_rate);
    const double sa = p.noise.accel_density * std::sqrt(p.imu_rate);
    const double dt = 1.0 / p.imu_rate;
    Vector3 bg = p.gyro_bias[fi], ba = p.accel_bias[fi];
    auto draw = [&] { return Vector3(normal(rng), normal(rng), normal(rng)); };

    std::vector<ImuSample> out;
    out.reserve(truth.size());
    for (const auto &ts : truth) {
        const auto [gyro, accel] = ideal_imu(ts.feet[fi], p.earth_rotation, earth);
        ImuSample s;
        s.t = ts.t;
        s.foot = foot;
        s.gyro = gyro + bg;
        s.accel = accel + ba;
        if (sg > 0.0) s.gyro += sg * draw();
        if (sa > 0.0) s.accel += sa * draw();
        if (p.noise.gyro_bias_walk > 0.0) bg += p.noise.gyro_bias_walk * std::sqrt(dt) * draw();
        if (p.noise.accel_bias_walk > 0.0) ba += p.noise.accel_bias_walk * std::sqrt(dt) * draw();
        out.push_back(s);
    }
    return out;
}

/// Range between the two ultrasonic transducers at a truth sample.
inline double true_range(const TruthSample &ts, const GaitParams &p) {
    const FootTruth &l = ts.feet[0], &r = ts.feet[1];
    return (l.p_e + truth_attitude(l) * p.lever_arm[0] - r.p_e - truth_attitude(r) * p.lever_arm[1]).norm();
}

/// Inter-foot ranges at range_rate. Truth must be sampled at imu_rate.
inline std::vector<RangeSample> synthesize_range(const std::vector<TruthSample> &truth, const GaitParams &p,
                                                 std::uint64_t seed) {
    auto rng = make_rng(seed, 7);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto stride = static_cast<std::size_t>(std::llround(p.imu_rate / p.range_rate));
    std::vector<RangeSample> out;
    for (std::size_t i = 0; i < truth.size(); i += stride) {
        RangeSample r;
        r.t = truth[i].t;
        r.d = true_range(truth[i], p);
        if (p.noise.range_sigma > 0.0) r.d += p.noise.range_sigma * normal(rng);
        r.lever_L = p.lever_arm[0];
        r.lever_R = p.lever_arm[1];
        out.push_back(r);
    }
    return out;
}

struct SimulatedWalk {
    std::vector<TruthSample> truth;
    std::vector<ImuSample> imu_left;
    std::vector<ImuSample> imu_right;
    std::vector<RangeSample> ranges;
    double walk_duration = 0.0; ///< one foot's time from first swing to last turn [s]
    double walk_distance = 0.0; ///< one foot's travelled distance [m]
};

inline double square_walk_duration(const GaitParams &p, int side_strides, int laps) {
    return laps * 4 * (side_strides * p.period() + p.turn_time + p.turn_pause);
}

inline double square_walk_distance(const GaitParams &p, int side_strides, int laps) {
    return laps * 4 * side_strides * p.stride_length;
}

/// Ground truth only, sampled at imu_rate. The sample count is odd so the
/// stream splits evenly into two-sample propagation steps.
inline std::vector<TruthSample> square_walk_truth(const GaitParams &p, int side_strides, int laps,
                                                  const EarthModel &earth = EarthModel::wgs84()) {
    p.validate();
    const double walk = square_walk_duration(p, side_strides, laps);
    const double t_end = p.initial_standstill + 0.5 * p.period() + walk + p.final_standstill;
    const GeodeticPosition left0 = p.start;
    const GeodeticPosition right0 = right_foot_init(p.heading0, p.stride_length, left0, earth);
    const FootPath left(p, left0, p.initial_standstill, side_strides, laps, t_end, earth);
    const FootPath right(p, right0, p.initial_standstill + 0.5 * p.period(), side_strides, laps, t_end, earth);

    long n = std::lround(t_end * p.imu_rate);
    if (n % 2 != 0) ++n;
    std::vector<TruthSample> truth(static_cast<std::size_t>(n + 1));
    for (long i = 0; i <= n; ++i) {
        TruthSample &ts = truth[static_cast<std::size_t>(i)];
        ts.t = static_cast<double>(i) / p.imu_rate;
        ts.feet[0] = left.at(ts.t);
        ts.feet[1] = right.at(ts.t);
    }
    return truth;
}

/// Square walk with side length side_strides * l_s, closing each lap with a
/// right turn at every corner.
inline SimulatedWalk build_square_walk(const GaitParams &p, int side_strides, int laps, std::uint64_t seed,
                                       const EarthModel &earth = EarthModel::wgs84()) {
    SimulatedWalk w;
    w.truth = square_walk_truth(p, side_strides, laps, earth);
    w.imu_left = synthesize_imu(w.truth, p, Foot::Left, seed, earth);
    w.imu_right = synthesize_imu(w.truth, p, Foot::Right, seed, earth);
    w.ranges = synthesize_range(w.truth, p, seed);
    w.walk_duration = square_walk_duration(p, side_strides, laps);
    w.walk_distance = square_walk_distance(p, side_strides, laps);
    return w;
}

/// Stance flags of one foot from the truth stream.
inline std::vector<bool> truth_stance_flags(const std::vector<TruthSample> &truth, Foot foot) {
    std::vector<bool> flags;
    flags.reserve(truth.size());
    for (const auto &ts : truth) flags.push_back(ts.feet[foot_index(foot)].stance);
    return flags;
}

} // namespace stridenav
