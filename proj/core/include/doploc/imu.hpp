#pragma once
// Inertial stream synthesis and the compass-free world frame. The estimated
// frame takes Z from gravity seen during a static lead-in and an arbitrary
// horizontal X (the device's own x axis projected flat), then follows gyro
// updates. Direction estimates made in this frame are only meaningful
// relative to the device, which is exactly what the heading-relative angle
// reports.

#include <cstdint>
#include <string>
#include <vector>

#include "doploc/geometry.hpp"
#include "doploc/trajectory.hpp"

namespace doploc {

struct ImuSample {
  double t = 0.0;
  Vector3d accel{0, 0, 0};  // device frame, includes gravity reaction, m/s^2
  Vector3d gyro{0, 0, 0};   // device frame, rad/s
};

struct ImuStream {
  double rate_hz = 200.0;
  std::vector<ImuSample> samples;

  double dt() const { return 1.0 / rate_hz; }
  void write_csv(const std::string& path) const;
};

// accel = R_world_to_device * (a_true + g + bias_world) + noise
// gyro  = interval-average body rates + bias_device + noise
ImuStream synthesize_imu(const Trajectory& traj, const Vector3d& accel_bias_world,
                         double accel_noise_std, double gyro_noise_std,
                         std::uint64_t seed,
                         const Vector3d& gyro_bias_device = Vector3d::Zero());

struct FrameEstimate {
  // Device -> estimated-world rotation per stream sample, unit quaternions.
  std::vector<Eigen::Quaterniond> q;
  double gravity_mag = 0.0;       // |mean static accel|
  double init_window_s = 0.5;
  size_t init_end_index = 0;

  Eigen::Matrix3d rotation(size_t k) const { return q[k].toRotationMatrix(); }
  // Opening angle from the device x axis to the estimated-world X axis
  // (zero at initialisation by construction, drifts only if the device yaws).
  double alpha0(size_t k) const;
  // Angle between the device plane normal and estimated-world up.
  double tilt(size_t k) const;
};

// Throws std::runtime_error if the initialisation window is not static.
FrameEstimate estimate_wcs_frame(const ImuStream& imu, double init_window_s = 0.5);

// Running time-integrals of gravity-free horizontal acceleration, the motion
// signature the direction regression correlates against Doppler. Plain
// left-Riemann sums: w[k] = sum_{i<k} T * a[i], accumulated exactly in that
// form so a constant accelerometer bias maps to an exactly linear-in-time
// velocity error.
struct MotionIntegrals {
  std::vector<double> t;    // elapsed from window start
  std::vector<double> w_x;  // m/s
  std::vector<double> w_y;
  std::vector<double> a_x;  // the integrand, kept for diagnostics/injection
  std::vector<double> a_y;
  double t_begin = 0.0;     // stream time of the first sample
  // Samples are interval averages; the instant matching row k is
  // t[k] + align_offset_s.
  double align_offset_s = 0.0;
};

MotionIntegrals integrate_motion(const ImuStream& imu, const FrameEstimate& frame,
                                 double t_begin, double t_end);

}  // namespace doploc
