// End-to-end runner: configuration, simulation or replay, the dual-foot
// filter loop, start-end error summaries and output files.
#pragma once

#include <stridenav/fusion.hpp>
#include <stridenav/gait_sim.hpp>
#include <stridenav/log_io.hpp>
#include <stridenav/observability.hpp>
#include <stridenav/zupt_detect.hpp>

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace stridenav {

enum class Variant { Zupt, ZuptRng, ZuptRngEc };

struct FeatureFlags {
    bool zupt = true;
    bool range = false;
    bool ellipsoid = false;
};

inline FeatureFlags features(Variant v) {
    switch (v) {
    case Variant::Zupt: return {true, false, false};
    case Variant::ZuptRng: return {true, true, false};
    case Variant::ZuptRngEc: return {true, true, true};
    }
    return {};
}

inline std::string variant_name(Variant v) {
    switch (v) {
    case Variant::Zupt: return "zupt";
    case Variant::ZuptRng: return "zupt-rng";
    case Variant::ZuptRngEc: return "zupt-rng-ec";
    }
    return "";
}

inline Variant parse_variant(const std::string &s) {
    for (Variant v : {Variant::Zupt, Variant::ZuptRng, Variant::ZuptRngEc}) {
        if (variant_name(v) == s) return v;
    }
    throw UsageError("unknown variant '" + s + "' (expected zupt, zupt-rng or zupt-rng-ec)");
}

/// Filter start: truth pose plus these errors. Attitude errors are added to
/// the (roll, yaw, pitch) Euler angles.
struct InitialEstimate {
    std::array<EulerAngles, 2> attitude_error{};
    std::array<Vector3, 2> gyro_bias{Vector3::Zero(), Vector3::Zero()};
    std::array<Vector3, 2> accel_bias{Vector3::Zero(), Vector3::Zero()};
};

struct FilterConfig {
    NoiseConfig noise;
    InitialUncertainty uncertainty;
    DetectorConfig detector;
    UpdateOptions update;
    InitialEstimate initial;
    std::array<Vector3, 2> lever_arm{Vector3(0.02, 0.05, -0.03), Vector3(0.03, -0.03, 0.04)};
};

struct ScenarioShape {
    int side_strides = 25;
    int laps = 8;
};

struct IoPaths {
    std::string imu;
    std::string range;
    std::string reference;
};

enum class RunMode { Simulate, Replay, Observability };

struct RunConfig {
    RunMode mode = RunMode::Simulate;
    GaitParams gait;
    ScenarioShape scenario;
    FilterConfig filter;
    std::vector<Variant> variants{Variant::Zupt, Variant::ZuptRng};
    IoPaths io;
    std::uint64_t seed = 1;

    void validate() const {
        gait.validate();
        filter.noise.validate();
        filter.detector.validate();
        if (scenario.side_strides < 1 || scenario.laps < 1) {
            throw UsageError("scenario: side_strides and laps must be at least 1");
        }
        if (variants.empty()) throw UsageError("filter: no variants selected");
        if (mode == RunMode::Replay && io.imu.empty()) throw UsageError("replay mode requires io.imu");
    }
};

// ---------------------------------------------------------------------------
// JSON configuration

namespace config_detail {

using nlohmann::json;

inline void check_keys(const json &j, std::initializer_list<const char *> allowed, const std::string &where) {
    if (!j.is_object()) throw UsageError(where + ": expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto &[key, value] : j.items()) {
        if (!ok.count(key)) throw UsageError(where + ": unknown key '" + key + "'");
    }
}

inline double number(const json &j, const char *key, double fallback, const std::string &where) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number()) throw UsageError(where + "." + key + ": expected a number");
    return j.at(key).get<double>();
}

inline int integer(const json &j, const char *key, int fallback, const std::string &where) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_number_integer()) throw UsageError(where + "." + key + ": expected an integer");
    return j.at(key).get<int>();
}

inline bool boolean(const json &j, const char *key, bool fallback, const std::string &where) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_boolean()) throw UsageError(where + "." + key + ": expected true or false");
    return j.at(key).get<bool>();
}

inline std::string text(const json &j, const char *key, const std::string &fallback, const std::string &where) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_string()) throw UsageError(where + "." + key + ": expected a string");
    return j.at(key).get<std::string>();
}

inline Vector3 vec3(const json &j, const char *key, const Vector3 &fallback, double scale, const std::string &where) {
    if (!j.contains(key)) return fallback;
    const json &a = j.at(key);
    if (!a.is_array() || a.size() != 3 || !a[0].is_number() || !a[1].is_number() || !a[2].is_number()) {
        throw UsageError(where + "." + key + ": expected an array of 3 numbers");
    }
    return Vector3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>()) * scale;
}

inline EulerAngles euler_deg(const json &j, const char *key, const EulerAngles &fallback, const std::string &where) {
    if (!j.contains(key)) return fallback;
    const Vector3 v = vec3(j, key, Vector3::Zero(), kDeg, where);
    return {v.x(), v.y(), v.z()};
}

constexpr double kSqrtHour = 60.0; // sqrt(3600 s)

} // namespace config_detail

/// Parse a configuration document. Unknown keys are rejected. Units follow
/// the README schema: noise densities per sqrt(hour), biases in deg/s and
/// m/s^2, angles in degrees except theta_max and psi_0 in radians.
inline RunConfig config_from_json(const nlohmann::json &j, RunConfig cfg = {}) {
    using namespace config_detail;
    check_keys(j, {"mode", "seed", "gait", "scenario", "filter", "io"}, "config");
    if (j.contains("mode")) {
        const std::string m = text(j, "mode", "", "config");
        if (m == "simulate") {
            cfg.mode = RunMode::Simulate;
        } else if (m == "replay") {
            cfg.mode = RunMode::Replay;
        } else if (m == "observability") {
            cfg.mode = RunMode::Observability;
        } else {
            throw UsageError("config.mode: expected simulate, replay or observability");
        }
    }
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned()) throw UsageError("config.seed: expected a non-negative integer");
        cfg.seed = j.at("seed").get<std::uint64_t>();
    }

    if (j.contains("gait")) {
        const json &g = j.at("gait");
        const std::string w = "gait";
        check_keys(g, {"l_s", "l_h", "t_u", "t_s", "t_o", "t_r", "theta_max", "psi_0", "imu_rate", "range_rate",
                       "initial_standstill", "final_standstill", "earth_rotation", "start", "n_b", "n_a", "n_r",
                       "n_bg", "n_ba", "b_g_L", "b_g_R", "b_a_L", "b_a_R", "l_L", "l_R"},
                   w);
        GaitParams &p = cfg.gait;
        p.stride_length = number(g, "l_s", p.stride_length, w);
        p.max_height = number(g, "l_h", p.max_height, w);
        p.swing_time = number(g, "t_u", p.swing_time, w);
        p.stance_time = number(g, "t_s", p.stance_time, w);
        p.turn_pause = number(g, "t_o", p.turn_pause, w);
        p.turn_time = number(g, "t_r", p.turn_time, w);
        p.max_pitch = number(g, "theta_max", p.max_pitch, w);
        p.heading0 = number(g, "psi_0", p.heading0, w);
        p.imu_rate = number(g, "imu_rate", p.imu_rate, w);
        p.range_rate = number(g, "range_rate", p.range_rate, w);
        p.initial_standstill = number(g, "initial_standstill", p.initial_standstill, w);
        p.final_standstill = number(g, "final_standstill", p.final_standstill, w);
        p.earth_rotation = boolean(g, "earth_rotation", p.earth_rotation, w);
        if (g.contains("start")) {
            const json &s = g.at("start");
            check_keys(s, {"lat_deg", "lon_deg", "h"}, w + ".start");
            p.start.latitude = number(s, "lat_deg", p.start.latitude / kDeg, w + ".start") * kDeg;
            p.start.longitude = number(s, "lon_deg", p.start.longitude / kDeg, w + ".start") * kDeg;
            p.start.height = number(s, "h", p.start.height, w + ".start");
        }
        p.noise.gyro_density = number(g, "n_b", p.noise.gyro_density / kDeg * kSqrtHour, w) * kDeg / kSqrtHour;
        p.noise.accel_density = number(g, "n_a", p.noise.accel_density * kSqrtHour, w) / kSqrtHour;
        p.noise.range_sigma = number(g, "n_r", p.noise.range_sigma, w);
        p.noise.gyro_bias_walk = number(g, "n_bg", p.noise.gyro_bias_walk, w);
        p.noise.accel_bias_walk = number(g, "n_ba", p.noise.accel_bias_walk, w);
        p.gyro_bias[0] = vec3(g, "b_g_L", p.gyro_bias[0], kDeg, w);
        p.gyro_bias[1] = vec3(g, "b_g_R", p.gyro_bias[1], kDeg, w);
        p.accel_bias[0] = vec3(g, "b_a_L", p.accel_bias[0], 1.0, w);
        p.accel_bias[1] = vec3(g, "b_a_R", p.accel_bias[1], 1.0, w);
        p.lever_arm[0] = vec3(g, "l_L", p.lever_arm[0], 1.0, w);
        p.lever_arm[1] = vec3(g, "l_R", p.lever_arm[1], 1.0, w);
        cfg.filter.lever_arm = p.lever_arm;
    }

    if (j.contains("scenario")) {
        const json &s = j.at("scenario");
        check_keys(s, {"side_strides", "laps"}, "scenario");
        cfg.scenario.side_strides = integer(s, "side_strides", cfg.scenario.side_strides, "scenario");
        cfg.scenario.laps = integer(s, "laps", cfg.scenario.laps, "scenario");
    }

    if (j.contains("filter")) {
        const json &f = j.at("filter");
        const std::string w = "filter";
        check_keys(f, {"variants", "n_b", "n_a", "sigma_bg", "sigma_ba", "sigma_v", "sigma_d", "sigma_ec", "gating",
                       "detector", "initial", "l_L", "l_R"},
                   w);
        FilterConfig &fc = cfg.filter;
        if (f.contains("variants")) {
            const json &v = f.at("variants");
            if (!v.is_array()) throw UsageError("filter.variants: expected an array of strings");
            cfg.variants.clear();
            for (const auto &e : v) {
                if (!e.is_string()) throw UsageError("filter.variants: expected an array of strings");
                cfg.variants.push_back(parse_variant(e.get<std::string>()));
            }
        }
        fc.noise.sigma_g = number(f, "n_b", fc.noise.sigma_g / kDeg * kSqrtHour, w) * kDeg / kSqrtHour;
        fc.noise.sigma_a = number(f, "n_a", fc.noise.sigma_a * kSqrtHour, w) / kSqrtHour;
        fc.noise.sigma_bg = number(f, "sigma_bg", fc.noise.sigma_bg, w);
        fc.noise.sigma_ba = number(f, "sigma_ba", fc.noise.sigma_ba, w);
        fc.noise.sigma_v = number(f, "sigma_v", fc.noise.sigma_v, w);
        fc.noise.sigma_d = number(f, "sigma_d", fc.noise.sigma_d, w);
        fc.noise.sigma_ec = number(f, "sigma_ec", fc.noise.sigma_ec, w);
        fc.update.gating = boolean(f, "gating", fc.update.gating, w);
        fc.lever_arm[0] = vec3(f, "l_L", fc.lever_arm[0], 1.0, w);
        fc.lever_arm[1] = vec3(f, "l_R", fc.lever_arm[1], 1.0, w);
        if (f.contains("detector")) {
            const json &d = f.at("detector");
            check_keys(d, {"window_len", "threshold", "epsilon_h", "hold_min"}, w + ".detector");
            fc.detector.window_len = integer(d, "window_len", fc.detector.window_len, w + ".detector");
            fc.detector.threshold = number(d, "threshold", fc.detector.threshold, w + ".detector");
            fc.detector.epsilon_h = number(d, "epsilon_h", fc.detector.epsilon_h, w + ".detector");
            fc.detector.hold_min = integer(d, "hold_min", fc.detector.hold_min, w + ".detector");
        }
        if (f.contains("initial")) {
            const json &i = f.at("initial");
            const std::string wi = w + ".initial";
            check_keys(i, {"attitude_error_L_deg", "attitude_error_R_deg", "b_g_L", "b_g_R", "b_a_L", "b_a_R",
                           "sigma_level_deg", "sigma_heading_deg", "sigma_velocity", "sigma_position", "sigma_b_g",
                           "sigma_b_a"},
                       wi);
            InitialEstimate &e = fc.initial;
            e.attitude_error[0] = euler_deg(i, "attitude_error_L_deg", e.attitude_error[0], wi);
            e.attitude_error[1] = euler_deg(i, "attitude_error_R_deg", e.attitude_error[1], wi);
            e.gyro_bias[0] = vec3(i, "b_g_L", e.gyro_bias[0], kDeg, wi);
            e.gyro_bias[1] = vec3(i, "b_g_R", e.gyro_bias[1], kDeg, wi);
            e.accel_bias[0] = vec3(i, "b_a_L", e.accel_bias[0], 1.0, wi);
            e.accel_bias[1] = vec3(i, "b_a_R", e.accel_bias[1], 1.0, wi);
            InitialUncertainty &u = fc.uncertainty;
            u.level_rad = number(i, "sigma_level_deg", u.level_rad / kDeg, wi) * kDeg;
            u.heading_rad = number(i, "sigma_heading_deg", u.heading_rad / kDeg, wi) * kDeg;
            u.velocity = number(i, "sigma_velocity", u.velocity, wi);
            u.position = number(i, "sigma_position", u.position, wi);
            u.gyro_bias = number(i, "sigma_b_g", u.gyro_bias / kDeg, wi) * kDeg;
            u.accel_bias = number(i, "sigma_b_a", u.accel_bias, wi);
        }
    }

    if (j.contains("io")) {
        const json &io = j.at("io");
        check_keys(io, {"imu", "range", "reference"}, "io");
        cfg.io.imu = text(io, "imu", cfg.io.imu, "io");
        cfg.io.range = text(io, "range", cfg.io.range, "io");
        cfg.io.reference = text(io, "reference", cfg.io.reference, "io");
    }
    return cfg;
}

/// Read and parse a configuration file; relative io paths are resolved
/// against the file's directory.
inline RunConfig load_config(const std::string &path, RunConfig base = {}) {
    auto f = open_input(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error &e) {
        throw UsageError(path + ": invalid JSON: " + e.what());
    }
    RunConfig cfg = config_from_json(j, std::move(base));
    const std::filesystem::path dir = std::filesystem::path(path).parent_path();
    for (std::string *p : {&cfg.io.imu, &cfg.io.range, &cfg.io.reference}) {
        if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (dir / *p).string();
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Preset scenarios

/// Eight laps of a 25-stride square with the start-up estimate errors of the
/// two-foot simulation study: heading gyro bias errors of -0.7 and +0.5 deg/s.
inline RunConfig long_walk_config() {
    RunConfig c;
    GaitParams &g = c.gait;
    g.initial_standstill = 0.0;
    g.final_standstill = 1.0;
    g.gyro_bias = {Vector3(2.0, 2.3, 1.7) * kDeg, Vector3(2.0, 2.3, 1.7) * kDeg};
    g.accel_bias = {Vector3(0.1, 0.2, -0.2), Vector3(0.1, 0.2, -0.2)};
    c.scenario = {25, 8};
    c.filter.lever_arm = g.lever_arm;
    InitialEstimate &e = c.filter.initial;
    e.attitude_error = {EulerAngles{2.0 * kDeg, 5.0 * kDeg, 2.0 * kDeg}, EulerAngles{-2.0 * kDeg, -3.0 * kDeg, -4.0 * kDeg}};
    e.gyro_bias = {Vector3(1.7, 1.6, 1.3) * kDeg, Vector3(2.5, 2.8, 1.0) * kDeg};
    c.filter.uncertainty.level_rad = 4.0 * kDeg;
    c.filter.uncertainty.heading_rad = 5.0 * kDeg;
    c.variants = {Variant::Zupt, Variant::ZuptRng};
    return c;
}

/// Same walk with heading gyro bias errors of the same sign (+0.3, +0.5 deg/s).
inline RunConfig same_sign_bias_config() {
    RunConfig c = long_walk_config();
    c.filter.initial.gyro_bias[0] = Vector3(1.7, 2.6, 1.3) * kDeg;
    return c;
}

/// 24 s noiseless square of 5 strides per side, no Earth rotation.
inline RunConfig observability_config() {
    RunConfig c;
    c.mode = RunMode::Observability;
    GaitParams &g = c.gait;
    g.noise = SensorNoise::none();
    g.earth_rotation = false;
    g.initial_standstill = 0.4;
    g.final_standstill = 0.4;
    g.gyro_bias = {Vector3(0.05, -0.05, 0.06) * kDeg, Vector3(0.05, -0.05, 0.06) * kDeg};
    g.accel_bias = {Vector3(0.2, 0.1, -0.2), Vector3(0.2, 0.1, -0.2)};
    c.scenario = {5, 1};
    return c;
}

// ---------------------------------------------------------------------------
// Inputs and reference

struct RunInputs {
    std::vector<ImuSample> left;
    std::vector<ImuSample> right;
    std::vector<RangeSample> ranges;
};

/// Truth needed for the start-end error summary.
struct Reference {
    GeodeticPosition origin;                 ///< left foot start
    std::array<EcefPosition, 2> end_p_e{EcefPosition::Zero(), EcefPosition::Zero()};
    std::array<double, 2> end_yaw{0.0, 0.0};
    std::array<Vector3, 2> gyro_bias{Vector3::Zero(), Vector3::Zero()};
    std::array<Vector3, 2> accel_bias{Vector3::Zero(), Vector3::Zero()};
};

inline nlohmann::json vec_json(const Vector3 &v) { return {v.x(), v.y(), v.z()}; }

inline nlohmann::json reference_to_json(const Reference &r) {
    nlohmann::json j;
    j["origin"] = {r.origin.latitude, r.origin.longitude, r.origin.height};
    for (int f = 0; f < 2; ++f) {
        const std::string k(1, foot_tag(f == 0 ? Foot::Left : Foot::Right));
        j[k] = {{"end_p_e", vec_json(r.end_p_e[f])},
                {"end_yaw", r.end_yaw[f]},
                {"gyro_bias", vec_json(r.gyro_bias[f])},
                {"accel_bias", vec_json(r.accel_bias[f])}};
    }
    return j;
}

inline Reference reference_from_json(const nlohmann::json &j) {
    try {
        Reference r;
        r.origin = {j.at("origin").at(0).get<double>(), j.at("origin").at(1).get<double>(),
                    j.at("origin").at(2).get<double>()};
        auto v3 = [](const nlohmann::json &a) {
            return Vector3(a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>());
        };
        for (int f = 0; f < 2; ++f) {
            const nlohmann::json &e = j.at(std::string(1, foot_tag(f == 0 ? Foot::Left : Foot::Right)));
            r.end_p_e[f] = v3(e.at("end_p_e"));
            r.end_yaw[f] = e.at("end_yaw").get<double>();
            r.gyro_bias[f] = v3(e.at("gyro_bias"));
            r.accel_bias[f] = v3(e.at("accel_bias"));
        }
        return r;
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(std::string("reference: ") + e.what());
    }
}

inline Reference load_reference(const std::string &path) {
    auto f = open_input(path);
    try {
        return reference_from_json(nlohmann::json::parse(f));
    } catch (const nlohmann::json::parse_error &e) {
        throw ParseError(path + ": " + e.what());
    }
}

/// End-of-walk truth. Biases are the configured constants.
inline Reference reference_from_truth(const std::vector<TruthSample> &truth, const GaitParams &p) {
    Reference r;
    r.origin = p.start;
    for (int f = 0; f < 2; ++f) {
        r.end_p_e[f] = truth.back().feet[f].p_e;
        r.end_yaw[f] = truth.back().feet[f].euler.yaw;
        r.gyro_bias[f] = p.gyro_bias[f];
        r.accel_bias[f] = p.accel_bias[f];
    }
    return r;
}

struct Simulation {
    SimulatedWalk walk;
    RunInputs inputs;
    Reference reference;
};

inline Simulation simulate(const RunConfig &cfg) {
    cfg.validate();
    Simulation s;
    s.walk = build_square_walk(cfg.gait, cfg.scenario.side_strides, cfg.scenario.laps, cfg.seed);
    s.inputs = {s.walk.imu_left, s.walk.imu_right, s.walk.ranges};
    s.reference = reference_from_truth(s.walk.truth, cfg.gait);
    return s;
}

// ---------------------------------------------------------------------------
// Filter loop

inline std::array<NavState, 2> initial_states(const GaitParams &g, const InitialEstimate &e, double t0,
                                              const EarthModel &earth = EarthModel::wgs84()) {
    const std::array<GeodeticPosition, 2> pos{g.start, right_foot_init(g.heading0, g.stride_length, g.start, earth)};
    std::array<NavState, 2> s;
    for (int f = 0; f < 2; ++f) {
        const EulerAngles err = e.attitude_error[f];
        s[f] = make_nav_state(pos[f], EulerAngles{err.roll, g.heading0 + err.yaw, err.pitch}, earth);
        s[f].b_g = e.gyro_bias[f];
        s[f].b_a = e.accel_bias[f];
        s[f].t = t0;
    }
    return s;
}

struct UpdateCounts {
    int zupt = 0;
    int range = 0;
    int range_skipped = 0;
    int ellipsoid = 0;
    int gated = 0;
};

struct FilterRun {
    Variant variant = Variant::Zupt;
    bool diverged = false;
    std::string message;
    int epochs = 0;
    UpdateCounts counts;
    JointState final_state;
    std::vector<TrajectoryRecord> records;
};

struct RunOptions {
    bool record = true; ///< keep a trajectory record per foot and epoch
    /// Per-sample stance flags [L, R] replacing the detector output.
    std::optional<std::array<std::vector<bool>, 2>> stance;
};

/// Per-foot bookkeeping for the once-per-stance ellipsoid update. The
/// anchor is the estimate at the first epoch of the previous stance, after
/// that epoch's own updates.
struct StanceTracker {
    bool in_stance = false;
    bool checked = false;
    std::optional<GeodeticPosition> anchor;
};

/// Run one filter variant over synchronized left/right streams. The step
/// is two IMU samples; stance flags come from the angular-rate detector.
/// Divergence stops the run and is reported in the result.
inline FilterRun run_filter(const RunInputs &in, const GaitParams &gait, const FilterConfig &fc, Variant variant,
                            const RunOptions &opt = {}, const EarthModel &earth = EarthModel::wgs84()) {
    if (in.left.size() != in.right.size()) throw ParseError("left and right IMU streams differ in length");
    if (in.left.size() < 3) throw ParseError("need at least 3 IMU samples per foot");
    for (std::size_t i = 0; i < in.left.size(); ++i) {
        if (in.left[i].t != in.right[i].t) {
            throw ParseError("left and right IMU streams are not synchronized at t = " + format_double(in.left[i].t));
        }
    }
    fc.noise.validate();
    const FeatureFlags feat = features(variant);
    const std::array<std::vector<bool>, 2> stance =
        opt.stance ? *opt.stance
                   : std::array<std::vector<bool>, 2>{detect_stance(in.left, fc.detector),
                                                      detect_stance(in.right, fc.detector)};
    if (stance[0].size() != in.left.size() || stance[1].size() != in.right.size()) {
        throw UsageError("run_filter: stance flag count differs from sample count");
    }
    const std::array<const std::vector<ImuSample> *, 2> imu{&in.left, &in.right};

    FilterRun run;
    run.variant = variant;
    const std::array<NavState, 2> s0 = initial_states(gait, fc.initial, in.left.front().t, earth);
    JointState &js = run.final_state;
    js = make_joint_state(s0[0], s0[1], fc.uncertainty, earth);
    std::array<StanceTracker, 2> tracker;
    const std::string tag = variant_name(variant);

    auto record = [&](double t, const std::array<bool, 2> &st) {
        if (!opt.record) return;
        for (Foot f : {Foot::Left, Foot::Right}) {
            run.records.push_back(make_record(t, f, js.foot(f), st[foot_index(f)], tag, earth));
        }
    };
    auto count = [&](const UpdateResult &r, int &applied) {
        if (r.status == UpdateStatus::Applied) ++applied;
        if (r.status == UpdateStatus::Gated) ++run.counts.gated;
        if (r.status == UpdateStatus::Skipped) ++run.counts.range_skipped;
    };

    record(in.left.front().t, {stance[0][0], stance[1][0]});
    std::size_t next_range = 0;
    try {
        for (std::size_t i = 0; i + 2 < in.left.size(); i += 2) {
            std::array<FootModel, 2> model;
            for (Foot f : {Foot::Left, Foot::Right}) {
                const int k = foot_index(f);
                const auto &s = *imu[k];
                const ImuIncrements incr = increments_from_samples(s[i], s[i + 1], s[i + 2]);
                const NavState prev = js.foot(f);
                js.foot(f) = propagate(prev, incr, earth);
                model[k] = foot_model(js.foot(f), mean_specific_force_ecef(prev, incr), earth);
            }
            const double T = in.left[i + 2].t - in.left[i].t;
            predict(js, model[0], model[1], T, fc.noise);
            const double t = in.left[i + 2].t;
            const std::array<bool, 2> st{stance[0][i + 2], stance[1][i + 2]};

            if (feat.zupt) {
                if (st[0] && st[1]) {
                    const UpdateResult r = update_zupt_both(js, fc.noise, fc.update);
                    count(r, run.counts.zupt);
                } else {
                    for (Foot f : {Foot::Left, Foot::Right}) {
                        if (st[foot_index(f)]) count(update_zupt(js, f, fc.noise, fc.update), run.counts.zupt);
                    }
                }
            }

            for (Foot f : {Foot::Left, Foot::Right}) {
                StanceTracker &tr = tracker[foot_index(f)];
                if (!st[foot_index(f)]) {
                    tr.in_stance = false;
                    continue;
                }
                if (!tr.in_stance) {
                    tr.in_stance = true;
                    tr.checked = false;
                }
                if (tr.checked) continue;
                tr.checked = true;
                const GeodeticPosition here = ecef_to_geodetic(js.foot(f).p_e, earth);
                if (feat.ellipsoid && tr.anchor && ellipsoid_trigger(tr.anchor->height, here.height, fc.detector)) {
                    count(update_ellipsoid(js, f, *tr.anchor, fc.noise, earth, fc.update), run.counts.ellipsoid);
                }
                tr.anchor = ecef_to_geodetic(js.foot(f).p_e, earth);
            }

            while (next_range < in.ranges.size() && in.ranges[next_range].t <= t) {
                if (feat.range) {
                    RangeSample r = in.ranges[next_range];
                    r.lever_L = fc.lever_arm[0];
                    r.lever_R = fc.lever_arm[1];
                    count(update_range(js, r, fc.noise, fc.update), run.counts.range);
                }
                ++next_range;
            }
            ++run.epochs;
            record(t, st);
        }
    } catch (const DivergenceError &e) {
        run.diverged = true;
        run.message = e.what();
    } catch (const PropagationError &e) {
        run.diverged = true;
        run.message = e.what();
    }
    return run;
}

// ---------------------------------------------------------------------------
// Summary

struct FootSummary {
    Vector3 end_offset_nue = Vector3::Zero(); ///< estimated end, NUE from the left start [m]
    Vector3 gyro_bias = Vector3::Zero();      ///< estimated [rad/s]
    Vector3 accel_bias = Vector3::Zero();     ///< estimated [m/s^2]
    double yaw = 0.0;                         ///< estimated end heading [rad]
    // Errors, valid when the summary has a reference.
    double position_error = 0.0;  ///< horizontal [m]
    double height_error = 0.0;    ///< estimated minus true [m]
    double yaw_error = 0.0;       ///< wrapped, estimated minus true [rad]
    double yaw_bias_error = 0.0;  ///< body y gyro bias, estimated minus true [rad/s]
};

struct Summary {
    Variant variant = Variant::Zupt;
    bool diverged = false;
    std::string message;
    int epochs = 0;
    UpdateCounts counts;
    bool has_reference = false;
    std::array<FootSummary, 2> feet{};
    double relative_position_error = 0.0; ///< horizontal [m]
    double relative_yaw_error = 0.0;      ///< [rad], absolute value
    double relative_yaw_bias_error = 0.0; ///< [rad/s], absolute value
};

inline Summary summarize(const FilterRun &run, const GeodeticPosition &origin, const std::optional<Reference> &ref,
                         const EarthModel &earth = EarthModel::wgs84()) {
    Summary s;
    s.variant = run.variant;
    s.diverged = run.diverged;
    s.message = run.message;
    s.epochs = run.epochs;
    s.counts = run.counts;
    const EcefPosition o = geodetic_to_ecef(origin, earth);
    const RotationMatrix C_en0 = n_to_e_rotation(origin).transpose();
    auto horizontal = [](const Vector3 &v) { return std::hypot(v.x(), v.z()); };
    std::array<Vector3, 2> est_off, true_off;
    std::array<double, 2> yaw_err{}, bias_err{};
    for (Foot f : {Foot::Left, Foot::Right}) {
        const int k = foot_index(f);
        const NavState &n = run.final_state.foot(f);
        FootSummary &fs = s.feet[k];
        est_off[k] = C_en0 * (n.p_e - o);
        fs.end_offset_nue = est_off[k];
        fs.gyro_bias = n.b_g;
        fs.accel_bias = n.b_a;
        const GeodeticPosition g = ecef_to_geodetic(n.p_e, earth);
        fs.yaw = euler_from_body_to_nav(n_to_e_rotation(g).transpose() * n.C_be).yaw;
        if (!ref) continue;
        true_off[k] = C_en0 * (ref->end_p_e[k] - o);
        fs.position_error = horizontal(est_off[k] - true_off[k]);
        fs.height_error = g.height - ecef_to_geodetic(ref->end_p_e[k], earth).height;
        yaw_err[k] = wrap_pi(fs.yaw - ref->end_yaw[k]);
        fs.yaw_error = yaw_err[k];
        bias_err[k] = n.b_g.y() - ref->gyro_bias[k].y();
        fs.yaw_bias_error = bias_err[k];
    }
    if (ref) {
        s.has_reference = true;
        s.relative_position_error = horizontal((est_off[0] - est_off[1]) - (true_off[0] - true_off[1]));
        s.relative_yaw_error = std::abs(wrap_pi(yaw_err[0] - yaw_err[1]));
        s.relative_yaw_bias_error = std::abs(bias_err[0] - bias_err[1]);
    }
    return s;
}

inline nlohmann::json summary_to_json(const Summary &s) {
    nlohmann::json j;
    j["variant"] = variant_name(s.variant);
    j["status"] = s.diverged ? "diverged" : "ok";
    if (s.diverged) j["message"] = s.message;
    j["epochs"] = s.epochs;
    j["updates"] = {{"zupt", s.counts.zupt},
                    {"range", s.counts.range},
                    {"range_skipped", s.counts.range_skipped},
                    {"ellipsoid", s.counts.ellipsoid},
                    {"gated", s.counts.gated}};
    for (Foot f : {Foot::Left, Foot::Right}) {
        const FootSummary &fs = s.feet[foot_index(f)];
        nlohmann::json e = {{"estimated_position_ne", {fs.end_offset_nue.x(), fs.end_offset_nue.z()}},
                            {"estimated_height", fs.end_offset_nue.y()},
                            {"yaw_deg", fs.yaw / kDeg},
                            {"gyro_bias_deg_s", vec_json(fs.gyro_bias / kDeg)},
                            {"accel_bias", vec_json(fs.accel_bias)}};
        if (s.has_reference) {
            e["position_error"] = fs.position_error;
            e["height_error"] = fs.height_error;
            e["yaw_error_deg"] = fs.yaw_error / kDeg;
            e["yaw_bias_error_deg_s"] = fs.yaw_bias_error / kDeg;
        }
        j["feet"][std::string(1, foot_tag(f))] = e;
    }
    if (s.has_reference) {
        j["relative_position_error"] = s.relative_position_error;
        j["relative_yaw_error_deg"] = s.relative_yaw_error / kDeg;
        j["relative_yaw_bias_error_deg_s"] = s.relative_yaw_bias_error / kDeg;
    }
    return j;
}

/// Start-end table, one row per variant and foot.
inline void write_summary_csv(std::ostream &os, const std::vector<Summary> &rows) {
    os << "variant,foot,status,north,east,position_error,height_error,yaw_error_deg,relative_position_error,"
          "relative_yaw_error_deg,yaw_bias_error_deg_s,relative_yaw_bias_error_deg_s\n";
    for (const auto &s : rows) {
        for (Foot f : {Foot::Left, Foot::Right}) {
            const FootSummary &fs = s.feet[foot_index(f)];
            os << variant_name(s.variant) << ',' << foot_tag(f) << ',' << (s.diverged ? "diverged" : "ok") << ','
               << format_double(fs.end_offset_nue.x()) << ',' << format_double(fs.end_offset_nue.z());
            if (s.has_reference) {
                os << ',' << format_double(fs.position_error) << ',' << format_double(fs.height_error) << ','
                   << format_double(fs.yaw_error / kDeg) << ',' << format_double(s.relative_position_error) << ','
                   << format_double(s.relative_yaw_error / kDeg) << ',' << format_double(fs.yaw_bias_error / kDeg)
                   << ',' << format_double(s.relative_yaw_bias_error / kDeg);
            } else {
                os << ",,,,,,,";
            }
            os << '\n';
        }
    }
}

struct PipelineResult {
    std::vector<FilterRun> runs;
    std::vector<Summary> summaries;
    bool diverged() const {
        for (const auto &r : runs) {
            if (r.diverged) return true;
        }
        return false;
    }
};

/// All configured variants, sequentially, on the same inputs.
inline PipelineResult run_variants(const RunInputs &in, const RunConfig &cfg, const std::optional<Reference> &ref,
                                   const RunOptions &opt = {}) {
    PipelineResult out;
    for (Variant v : cfg.variants) {
        out.runs.push_back(run_filter(in, cfg.gait, cfg.filter, v, opt));
        out.summaries.push_back(summarize(out.runs.back(), cfg.gait.start, ref));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Observability study

struct FootObservability {
    ObservabilityTrace trace;
    BatchSolution solution;
    Vector3 true_accel_bias = Vector3::Zero();
    Vector3 true_gyro_bias = Vector3::Zero();
};

/// Batch observability on the simulated walk, one foot, truth stance flags.
inline FootObservability observe_foot(const Simulation &sim, const GaitParams &gait, Foot foot) {
    const auto &imu = foot == Foot::Left ? sim.inputs.left : sim.inputs.right;
    FootObservability o;
    o.trace = observability_trace(imu, truth_stance_flags(sim.walk.truth, foot), normal_gravity(gait.start.latitude,
                                                                                                 gait.start.height));
    o.solution = solve_batch(o.trace.batch);
    o.true_accel_bias = gait.accel_bias[foot_index(foot)];
    o.true_gyro_bias = gait.gyro_bias[foot_index(foot)];
    return o;
}

inline void write_spectrum_csv(std::ostream &os, const ObservabilityTrace &trace) {
    os << "row,t_end,ev0,ev1,ev2,ev3,ev4,ev5,ev6,ev7,ev8\n";
    for (std::size_t r = 0; r < trace.spectra.size(); ++r) {
        os << r << ',' << format_double(trace.batch.rows[r].t_end);
        for (double e : trace.spectra[r]) os << ',' << format_double(e);
        os << '\n';
    }
}

inline nlohmann::json observability_to_json(const FootObservability &o) {
    const BatchSolution &s = o.solution;
    nlohmann::json j;
    j["rows"] = o.trace.batch.rows.size();
    j["rank"] = s.rank;
    j["status"] = s.status == SolveStatus::FullRank ? "full-rank" : "rank-deficient";
    j["singular_values"] = std::vector<double>(s.singular_values.data(), s.singular_values.data() + s.singular_values.size());
    if (s.status == SolveStatus::FullRank) {
        const LevelAngles lv = level_from_x_theta(s.x_theta());
        j["accel_bias"] = vec_json(s.accel_bias());
        j["gyro_bias_deg_s"] = vec_json(s.gyro_bias() / kDeg);
        j["x_theta"] = vec_json(s.x_theta());
        j["roll_deg"] = lv.roll / kDeg;
        j["pitch_deg"] = lv.pitch / kDeg;
        j["residual"] = s.residual;
    }
    j["true_accel_bias"] = vec_json(o.true_accel_bias);
    j["true_gyro_bias_deg_s"] = vec_json(o.true_gyro_bias / kDeg);
    return j;
}

// ---------------------------------------------------------------------------
// Output files

inline void write_text(const std::filesystem::path &p, const std::string &content) {
    auto f = open_output(p.string());
    f << content;
    if (!f) throw ParseError("failed writing '" + p.string() + "'");
}

inline void write_logs(const std::filesystem::path &dir, const RunInputs &in) {
    {
        auto f = open_output((dir / "imu.csv").string());
        write_imu_csv(f, in.left, in.right);
    }
    auto f = open_output((dir / "range.csv").string());
    write_range_csv(f, in.ranges);
}

/// trajectory_<variant>.csv, trajectory_<variant>.geojson, summary.json and
/// summary.csv.
inline void write_results(const std::filesystem::path &dir, const PipelineResult &res) {
    nlohmann::json all = {{"variants", nlohmann::json::array()}};
    for (std::size_t k = 0; k < res.runs.size(); ++k) {
        const std::string name = variant_name(res.runs[k].variant);
        {
            auto f = open_output((dir / ("trajectory_" + name + ".csv")).string());
            write_trajectory_csv(f, res.runs[k].records);
        }
        write_text(dir / ("trajectory_" + name + ".geojson"), trajectory_geojson(res.runs[k].records).dump() + "\n");
        all["variants"].push_back(summary_to_json(res.summaries[k]));
    }
    write_text(dir / "summary.json", all.dump(2) + "\n");
    auto f = open_output((dir / "summary.csv").string());
    write_summary_csv(f, res.summaries);
}

} // namespace stridenav
