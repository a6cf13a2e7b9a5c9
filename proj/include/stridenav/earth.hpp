// WGS-84 Earth model: geodetic <-> ECEF, local North-Up-East frame, normal
// gravity and the tangent-plane offset used by the gait simulator.
//
// ECEF axes: z along the polar axis, x through the Greenwich meridian at the
// equator. The local navigation frame is ordered North-Up-East (NUE); a
// vector expressed there has components (north, up, east).
#pragma once

#include <stridenav/types.hpp>

#include <cmath>

namespace stridenav {

struct GeodeticPosition {
    double latitude = 0.0;  ///< [rad], |lat| <= pi/2
    double longitude = 0.0; ///< [rad], wrapped to (-pi, pi]
    double height = 0.0;    ///< [m] above the ellipsoid
};

/// ECEF position [m].
using EcefPosition = Eigen::Vector3d;

struct EarthModel {
    double semi_major_axis = 6378137.0;         ///< a [m]
    double eccentricity = 0.0818191908426215;   ///< first eccentricity e
    double rotation_rate = 7.292115e-5;         ///< Omega [rad/s]
    double equatorial_gravity = 9.7803253359;   ///< normal gravity at equator [m/s^2]
    double polar_gravity = 9.8321849378;        ///< normal gravity at pole [m/s^2]
    double gm = 3.986004418e14;                 ///< [m^3/s^2], for the free-air term

    static EarthModel wgs84() { return {}; }

    double e2() const { return eccentricity * eccentricity; }
    double semi_minor_axis() const { return semi_major_axis * std::sqrt(1.0 - e2()); }
    double flattening() const { return 1.0 - std::sqrt(1.0 - e2()); }
    Vector3 omega_ie() const { return {0.0, 0.0, rotation_rate}; }

    /// Transverse (prime-vertical) radius of curvature at latitude.
    double transverse_radius(double lat) const {
        const double s = std::sin(lat);
        return semi_major_axis / std::sqrt(1.0 - e2() * s * s);
    }

    /// Meridian radius of curvature at latitude.
    double meridian_radius(double lat) const {
        const double s = std::sin(lat);
        const double w = 1.0 - e2() * s * s;
        return semi_major_axis * (1.0 - e2()) / (w * std::sqrt(w));
    }

    void validate() const {
        if (!(semi_major_axis > 0.0) || !(eccentricity >= 0.0 && eccentricity < 1.0) ||
            !(rotation_rate > 0.0)) {
            throw UsageError("EarthModel: require a > 0, 0 <= e < 1, Omega > 0");
        }
    }
};

// Both conversions run in extended precision internally; in double the
// height cancellation alone costs about one ulp of an ECEF coordinate.
using WideReal = long double;

inline EcefPosition geodetic_to_ecef(const GeodeticPosition &g,
                                     const EarthModel &m = EarthModel::wgs84()) {
    const WideReal lat = g.latitude, lon = g.longitude, h = g.height;
    const WideReal a = m.semi_major_axis, e2 = WideReal(m.eccentricity) * m.eccentricity;
    const WideReal sl = std::sin(lat), cl = std::cos(lat);
    const WideReal N = a / std::sqrt(1.0L - e2 * sl * sl);
    return {static_cast<double>((N + h) * cl * std::cos(lon)),
            static_cast<double>((N + h) * cl * std::sin(lon)),
            static_cast<double>((N * (1.0L - e2) + h) * sl)};
}

constexpr int kGeodeticMaxIterations = 10;
constexpr WideReal kGeodeticTolerance = 1e-18L;

/// Fixed-point latitude iteration. Throws ConvergenceError for points near
/// the Earth's centre or when the iteration cap is hit.
inline GeodeticPosition ecef_to_geodetic(const EcefPosition &p,
                                         const EarthModel &m = EarthModel::wgs84()) {
    if (!p.allFinite() || p.norm() < 1000.0) {
        throw ConvergenceError("ecef_to_geodetic: degenerate position near Earth centre");
    }
    const WideReal a = m.semi_major_axis, e2 = WideReal(m.eccentricity) * m.eccentricity;
    const WideReal x = p.x(), y = p.y(), z = p.z();
    const WideReal rho = std::hypot(x, y);
    GeodeticPosition g;
    g.longitude = static_cast<double>(std::atan2(y, x));
    if (g.longitude <= -kPi) g.longitude += 2.0 * kPi;

    WideReal lat = std::atan2(z, rho * (1.0L - e2));
    bool converged = false;
    for (int it = 0; it < kGeodeticMaxIterations; ++it) {
        const WideReal s = std::sin(lat);
        const WideReal N = a / std::sqrt(1.0L - e2 * s * s);
        const WideReal next = std::atan2(z + e2 * N * s, rho);
        const WideReal step = std::abs(next - lat);
        lat = next;
        if (step < kGeodeticTolerance) {
            converged = true;
            break;
        }
    }
    if (!converged) throw ConvergenceError("ecef_to_geodetic: latitude iteration did not converge");
    const WideReal sl = std::sin(lat);
    g.latitude = static_cast<double>(lat);
    g.height = static_cast<double>(rho * std::cos(lat) + z * sl - a * std::sqrt(1.0L - e2 * sl * sl));
    return g;
}

/// Rotation from the local North-Up-East frame to ECEF. Columns are the ECEF
/// directions of North, Up and East.
inline RotationMatrix n_to_e_rotation(double latitude, double longitude) {
    const double sl = std::sin(latitude), cl = std::cos(latitude);
    const double so = std::sin(longitude), co = std::cos(longitude);
    RotationMatrix C;
    C << -sl * co, cl * co, -so,
         -sl * so, cl * so, co,
          cl,      sl,      0.0;
    return C;
}

inline RotationMatrix n_to_e_rotation(const GeodeticPosition &g) {
    return n_to_e_rotation(g.latitude, g.longitude);
}

/// Somigliana normal gravity with the second-order free-air correction.
inline double normal_gravity(double latitude, double height,
                             const EarthModel &m = EarthModel::wgs84()) {
    const double a = m.semi_major_axis, b = m.semi_minor_axis();
    const double s2 = std::sin(latitude) * std::sin(latitude);
    const double k = (b * m.polar_gravity - a * m.equatorial_gravity) / (a * m.equatorial_gravity);
    const double g0 = m.equatorial_gravity * (1.0 + k * s2) / std::sqrt(1.0 - m.e2() * s2);
    const double f = m.flattening();
    const double mm = m.rotation_rate * m.rotation_rate * a * a * b / m.gm;
    return g0 * (1.0 - 2.0 / a * (1.0 + f + mm - 2.0 * f * s2) * height + 3.0 * height * height / (a * a));
}

/// Normal gravity (gravitation plus centrifugal) as an ECEF vector. Points
/// along the local ellipsoid-normal Down direction.
inline Vector3 gravity_ecef(const EcefPosition &p, const EarthModel &m = EarthModel::wgs84()) {
    const GeodeticPosition g = ecef_to_geodetic(p, m);
    return -normal_gravity(g.latitude, g.height, m) * n_to_e_rotation(g).col(1);
}

/// Apply an offset expressed in the anchor's NUE tangent plane and return the
/// resulting geodetic position.
inline GeodeticPosition tangent_offset_to_position(const Vector3 &delta_nue,
                                                   const GeodeticPosition &anchor,
                                                   const EarthModel &m = EarthModel::wgs84()) {
    const Vector3 delta_e = n_to_e_rotation(anchor) * delta_nue;
    return ecef_to_geodetic(geodetic_to_ecef(anchor, m) + delta_e, m);
}

} // namespace stridenav
