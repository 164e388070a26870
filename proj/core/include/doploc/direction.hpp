#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "doploc/imu.hpp"

namespace doploc {

// Direction of an anchor as seen from the phone, recovered by regressing
// the Doppler-implied approach speed onto the integrated horizontal motion.
// The intercept column absorbs the unknown initial velocity and the ramp
// column absorbs a constant accelerometer bias, so neither leaks into the
// direction cosines.
struct DirectionFit {
  Eigen::Vector4d lambda;      // [toward-x, toward-y, intercept, ramp]
  double alpha_rad = 0.0;      // bearing of the anchor, in [-pi/2, 3*pi/2)
  double alpha_rel_rad = 0.0;  // device-relative bearing, in (-pi, pi]
  double cond = 0.0;           // condition estimate of the scaled system
  double residual_rms_hz = 0.0;
  bool used_qr = false;  // normal equations were too ill-conditioned
};

// Samples of the measured Doppler shift, in Hz, at the times `t_s` (same
// clock as the motion integrals; the caller supplies the aligned times).
DirectionFit fit_direction(const MotionIntegrals& motion,
                           const std::vector<double>& t_s,
                           const std::vector<double>& f_shift_hz,
                           double carrier_hz, double speed_of_sound,
                           double alpha0_rad = 0.0);

// Full 3-D direction from exact velocity samples; no nuisance columns, so
// the inputs must already be bias-free. Throws when the velocities do not
// span all three axes, naming the degenerate one.
Eigen::Vector3d direction_3d(const std::vector<Eigen::Vector3d>& velocity,
                             const std::vector<double>& f_shift_hz,
                             double carrier_hz, double speed_of_sound);

// Angle from the direction cosines alone; kept separate because the branch
// cut matters: the result lives in [-pi/2, 3*pi/2).
double angle_from_lambda(double lambda_x, double lambda_y);

// Device-relative bearing from the world-frame bearing and the device
// heading at initialization; wrapped to (-pi, pi].
double relative_angle(double alpha_rad, double alpha0_rad);

// Closed shake patterns with four straight legs give one shift per leg:
//   f_i = (f_c * u_i / v) * (sin a, cos a, -sin a, -cos a)_i
// Recovers a from measured leg shifts by scanning the residual. Throws if
// opposite legs carry the same sign or all shifts vanish.
double direction_from_legs(const std::array<double, 4>& leg_shift_hz,
                           const std::array<double, 4>& leg_speed_mps,
                           double carrier_hz, double speed_of_sound);

std::array<double, 4> leg_shifts(double alpha_rad, double speed_mps,
                                 double carrier_hz, double speed_of_sound);

}  // namespace doploc
