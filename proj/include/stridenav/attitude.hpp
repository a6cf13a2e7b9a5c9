// Euler angles for the North-Up-East navigation frame.
//
// Body axes: x forward, y up, z right. Heading (yaw) is measured from North
// towards East about the down direction, pitch is nose-up about the body z
// axis and roll is about the body x axis:
//
//   C_b^n = R_y(-yaw) * R_z(pitch) * R_x(roll)
//
// so the body up axis in the n-frame, C_n^b * up, equals
// (sin pitch, cos roll cos pitch, -sin roll cos pitch).
#pragma once

#include <stridenav/types.hpp>

#include <algorithm>
#include <cmath>

namespace stridenav {

struct EulerAngles {
    double roll = 0.0;
    double yaw = 0.0;
    double pitch = 0.0;
};

inline Matrix3 rot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Matrix3 m;
    m << 1, 0, 0, 0, c, -s, 0, s, c;
    return m;
}

inline Matrix3 rot_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Matrix3 m;
    m << c, 0, s, 0, 1, 0, -s, 0, c;
    return m;
}

inline Matrix3 rot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Matrix3 m;
    m << c, -s, 0, s, c, 0, 0, 0, 1;
    return m;
}

inline RotationMatrix body_to_nav(const EulerAngles &e) {
    return rot_y(-e.yaw) * rot_z(e.pitch) * rot_x(e.roll);
}

inline EulerAngles euler_from_body_to_nav(const RotationMatrix &C_bn) {
    EulerAngles e;
    e.pitch = std::asin(std::clamp(C_bn(1, 0), -1.0, 1.0));
    e.yaw = std::atan2(C_bn(2, 0), C_bn(0, 0));
    e.roll = std::atan2(-C_bn(1, 2), C_bn(1, 1));
    return e;
}

} // namespace stridenav
