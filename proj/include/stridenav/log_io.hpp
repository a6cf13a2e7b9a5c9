// CSV logs for IMU and range streams, trajectory CSV and GeoJSON export.
//
// Numbers are written in the shortest form that parses back to the same
// double, so write -> parse -> write is byte-identical.
#pragma once

#include <stridenav/attitude.hpp>
#include <stridenav/earth.hpp>
#include <stridenav/fusion.hpp>
#include <stridenav/strapdown.hpp>

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace stridenav {

inline constexpr std::string_view kImuHeader = "t,foot,gx,gy,gz,ax,ay,az";
inline constexpr std::string_view kRangeHeader = "t,d";

inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc{}) throw Error("format_double: conversion failed");
    return {buf, res.ptr};
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        cols.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cols;
}

inline double parse_number(std::string_view s, long line, const char *column) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ParseError(std::string("column ") + column + ": not a number '" + std::string(s) + "'", line);
    }
    if (!std::isfinite(v)) throw ParseError(std::string("column ") + column + ": non-finite value", line);
    return v;
}

inline std::string_view strip_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

} // namespace detail

/// IMU rows of both feet, merged by time with the left foot first at equal
/// timestamps.
inline void write_imu_csv(std::ostream &os, const std::vector<ImuSample> &left,
                          const std::vector<ImuSample> &right) {
    os << kImuHeader << '\n';
    auto row = [&os](const ImuSample &s) {
        os << format_double(s.t) << ',' << foot_tag(s.foot);
        for (int k = 0; k < 3; ++k) os << ',' << format_double(s.gyro(k));
        for (int k = 0; k < 3; ++k) os << ',' << format_double(s.accel(k));
        os << '\n';
    };
    std::size_t i = 0, j = 0;
    while (i < left.size() || j < right.size()) {
        if (j >= right.size() || (i < left.size() && left[i].t <= right[j].t)) {
            row(left[i++]);
        } else {
            row(right[j++]);
        }
    }
}

inline void write_range_csv(std::ostream &os, const std::vector<RangeSample> &ranges) {
    os << kRangeHeader << '\n';
    for (const auto &r : ranges) os << format_double(r.t) << ',' << format_double(r.d) << '\n';
}

struct ImuLog {
    std::vector<ImuSample> left;
    std::vector<ImuSample> right;
};

/// Parse an IMU log. Rows must be sorted by time; each foot's timestamps
/// must strictly increase.
inline ImuLog parse_imu_csv(std::istream &is) {
    std::string buf;
    long line = 0;
    if (!std::getline(is, buf)) throw ParseError("no samples");
    ++line;
    if (detail::strip_cr(buf) != kImuHeader) {
        throw ParseError("expected header '" + std::string(kImuHeader) + "'", line);
    }
    ImuLog log;
    double t_last = -INFINITY;
    while (std::getline(is, buf)) {
        ++line;
        const std::string_view text = detail::strip_cr(buf);
        if (text.empty()) continue;
        const auto cols = detail::split_csv(text);
        if (cols.size() != 8) {
            throw ParseError("expected 8 columns, found " + std::to_string(cols.size()), line);
        }
        ImuSample s;
        s.t = detail::parse_number(cols[0], line, "t");
        if (cols[1] == "L") {
            s.foot = Foot::Left;
        } else if (cols[1] == "R") {
            s.foot = Foot::Right;
        } else {
            throw ParseError("unknown foot tag '" + std::string(cols[1]) + "'", line);
        }
        static constexpr const char *names[] = {"gx", "gy", "gz", "ax", "ay", "az"};
        for (int k = 0; k < 3; ++k) s.gyro(k) = detail::parse_number(cols[2 + k], line, names[k]);
        for (int k = 0; k < 3; ++k) s.accel(k) = detail::parse_number(cols[5 + k], line, names[3 + k]);

        auto &stream = s.foot == Foot::Left ? log.left : log.right;
        if (s.t < t_last || (!stream.empty() && s.t <= stream.back().t)) {
            throw ParseError("timestamp " + std::string(cols[0]) + " is out of order", line);
        }
        t_last = s.t;
        stream.push_back(s);
    }
    if (log.left.empty() && log.right.empty()) throw ParseError("no samples");
    return log;
}

/// Parse a range log. Lever arms are not part of the log and stay zero.
inline std::vector<RangeSample> parse_range_csv(std::istream &is) {
    std::string buf;
    long line = 0;
    if (!std::getline(is, buf)) throw ParseError("no samples");
    ++line;
    if (detail::strip_cr(buf) != kRangeHeader) {
        throw ParseError("expected header '" + std::string(kRangeHeader) + "'", line);
    }
    std::vector<RangeSample> out;
    while (std::getline(is, buf)) {
        ++line;
        const std::string_view text = detail::strip_cr(buf);
        if (text.empty()) continue;
        const auto cols = detail::split_csv(text);
        if (cols.size() != 2) throw ParseError("expected 2 columns, found " + std::to_string(cols.size()), line);
        RangeSample r;
        r.t = detail::parse_number(cols[0], line, "t");
        r.d = detail::parse_number(cols[1], line, "d");
        if (!(r.d > 0.0)) throw ParseError("range must be positive", line);
        if (!out.empty() && r.t <= out.back().t) {
            throw ParseError("timestamp " + std::string(cols[0]) + " is out of order", line);
        }
        out.push_back(r);
    }
    if (out.empty()) throw ParseError("no samples");
    return out;
}

inline std::ifstream open_input(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open '" + path + "'");
    return f;
}

inline std::ofstream open_output(const std::string &path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot write '" + path + "'");
    return f;
}

/// Both logs from disk. File name prefixes parse errors.
inline std::pair<ImuLog, std::vector<RangeSample>> parse_logs(const std::string &imu_path,
                                                              const std::string &range_path) {
    auto with_path = [](const std::string &path, auto &&fn) {
        try {
            return fn();
        } catch (const ParseError &e) {
            throw ParseError(path + ": " + e.what());
        }
    };
    ImuLog imu = with_path(imu_path, [&] {
        auto f = open_input(imu_path);
        return parse_imu_csv(f);
    });
    std::vector<RangeSample> ranges;
    if (!range_path.empty()) {
        ranges = with_path(range_path, [&] {
            auto f = open_input(range_path);
            return parse_range_csv(f);
        });
    }
    return {std::move(imu), std::move(ranges)};
}

/// One filter output row for one foot.
struct TrajectoryRecord {
    double t = 0.0;
    Foot foot = Foot::Left;
    GeodeticPosition pos;
    Vector3 v_n = Vector3::Zero(); ///< NUE [m/s]
    EulerAngles euler;
    bool stance = false;
    std::string variant;
};

inline TrajectoryRecord make_record(double t, Foot foot, const NavState &s, bool stance,
                                    const std::string &variant,
                                    const EarthModel &earth = EarthModel::wgs84()) {
    TrajectoryRecord r;
    r.t = t;
    r.foot = foot;
    r.pos = ecef_to_geodetic(s.p_e, earth);
    const RotationMatrix C_en = n_to_e_rotation(r.pos).transpose();
    r.v_n = C_en * s.v_e;
    r.euler = euler_from_body_to_nav(C_en * s.C_be);
    r.stance = stance;
    r.variant = variant;
    return r;
}

inline void write_trajectory_csv(std::ostream &os, const std::vector<TrajectoryRecord> &records) {
    os << "t,foot,lat_deg,lon_deg,h,vn,vu,ve,roll_deg,yaw_deg,pitch_deg,stance,variant\n";
    for (const auto &r : records) {
        os << format_double(r.t) << ',' << foot_tag(r.foot) << ',' << format_double(r.pos.latitude / kDeg) << ','
           << format_double(r.pos.longitude / kDeg) << ',' << format_double(r.pos.height);
        for (int k = 0; k < 3; ++k) os << ',' << format_double(r.v_n(k));
        os << ',' << format_double(r.euler.roll / kDeg) << ',' << format_double(r.euler.yaw / kDeg) << ','
           << format_double(r.euler.pitch / kDeg) << ',' << (r.stance ? 1 : 0) << ',' << r.variant << '\n';
    }
}

/// FeatureCollection with one LineString per foot, coordinates
/// [lon_deg, lat_deg, h].
inline nlohmann::json trajectory_geojson(const std::vector<TrajectoryRecord> &records) {
    nlohmann::json fc = {{"type", "FeatureCollection"}, {"features", nlohmann::json::array()}};
    for (Foot f : {Foot::Left, Foot::Right}) {
        nlohmann::json coords = nlohmann::json::array();
        std::string variant;
        for (const auto &r : records) {
            if (r.foot != f) continue;
            coords.push_back({r.pos.longitude / kDeg, r.pos.latitude / kDeg, r.pos.height});
            variant = r.variant;
        }
        if (coords.empty()) continue;
        fc["features"].push_back({{"type", "Feature"},
                                  {"properties", {{"foot", std::string(1, foot_tag(f))}, {"variant", variant}}},
                                  {"geometry", {{"type", "LineString"}, {"coordinates", coords}}}});
    }
    return fc;
}

} // namespace stridenav
