#pragma once
// Shared numeric helpers: angle wrapping, unit conversions, physical constants.

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace doploc {

using Eigen::Vector2d;
using Eigen::Vector3d;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kStandardGravity = 9.80665;  // m/s^2

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// Wrap into (-pi, pi].
inline double wrap_pi(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

// Wrap into [-pi/2, 3*pi/2), the range produced by the two-branch arcsin
// bearing formula.
inline double wrap_bearing(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a < -kPi / 2.0) a += 2.0 * kPi;
  if (a >= 3.0 * kPi / 2.0) a -= 2.0 * kPi;
  return a;
}

// Smallest absolute difference between two angles, in [0, pi].
inline double angle_dist(double a, double b) { return std::abs(wrap_pi(a - b)); }

inline double dbfs_to_amplitude(double db) { return std::pow(10.0, db / 20.0); }
inline double amplitude_to_dbfs(double a) { return 20.0 * std::log10(a); }

}  // namespace doploc
