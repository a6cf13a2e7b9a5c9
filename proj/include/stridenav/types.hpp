// Common types for the stridenav dual-foot pedestrian navigation library.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace stridenav {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

/// Body-to-frame rotation, expected to stay in SO(3).
using RotationMatrix = Eigen::Matrix3d;

enum class Foot { Left, Right };

inline char foot_tag(Foot f) { return f == Foot::Left ? 'L' : 'R'; }
inline int foot_index(Foot f) { return f == Foot::Left ? 0 : 1; }

// Error hierarchy. Everything thrown by the library derives from Error so
// callers can map failures onto exit codes in one place.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Caller passed arguments that violate a documented precondition.
class UsageError : public Error {
  public:
    using Error::Error;
};

/// An iterative routine failed to converge (degenerate input).
class ConvergenceError : public Error {
  public:
    using Error::Error;
};

/// Mechanization produced a non-finite state or received invalid increments.
class PropagationError : public Error {
  public:
    using Error::Error;
};

/// Covariance lost symmetry/positive semidefiniteness beyond tolerance.
class DivergenceError : public Error {
  public:
    using Error::Error;
};

/// Malformed log/config input. Carries the 1-based line when known.
class ParseError : public Error {
  public:
    ParseError(const std::string &what, long line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    long line() const { return line_; }

  private:
    long line_;
};

inline bool all_finite(const Vector3 &v) { return v.allFinite(); }

constexpr double kPi = 3.14159265358979323846;
constexpr double kDeg = kPi / 180.0;

/// Wrap an angle to (-pi, pi].
inline double wrap_pi(double a) {
    double w = std::remainder(a, 2.0 * kPi);
    if (w <= -kPi) w += 2.0 * kPi;
    return w;
}

} // namespace stridenav
