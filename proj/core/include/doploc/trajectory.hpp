#pragma once
// Scripted phone motion. Patterns are generated from closed-form paths, then
// sampled on two clocks: a dense audio-rate track (positions and velocities,
// analytic) that drives sound synthesis, and an inertial-rate track whose
// stored velocity and acceleration follow the forward-difference convention
//   v[k] = (p[k+1] - p[k]) / T,   a[k] = (v[k+1] - v[k]) / T
// so that discrete integration telescopes exactly: sum_{i<k} T*a[i] = v[k]-v[0].
// Samples there represent interval averages; the matching instant for sample k
// is t[k] + T/2, exposed as Trajectory::imu_time_offset().

#include <cstdint>
#include <string>
#include <vector>

#include "doploc/geometry.hpp"
#include "doploc/scenario.hpp"

namespace doploc {

struct TrajectorySample {
  double t = 0.0;
  Vector3d p{0, 0, 0};
  Vector3d v{0, 0, 0};
  Vector3d a{0, 0, 0};
  Eigen::Quaterniond q{1, 0, 0, 0};  // device frame -> world frame
};

struct Trajectory {
  double imu_rate_hz = 200.0;
  double audio_rate_hz = 44100.0;
  std::vector<TrajectorySample> imu;
  // Dense track, one entry per audio sample starting at t = 0.
  std::vector<Vector3d> audio_p;
  std::vector<Vector3d> audio_v;

  double duration_s() const {
    return audio_p.empty() ? 0.0 : (audio_p.size() - 1) / audio_rate_hz;
  }
  double imu_dt() const { return 1.0 / imu_rate_hz; }
  // Interval-average samples are centered half a step late.
  double imu_time_offset() const { return 0.5 / imu_rate_hz; }

  void write_csv(const std::string& path) const;
};

// Deterministic for a given spec; the arbitrary pattern draws its shape from
// MotionSpec::shape_seed.
Trajectory gen_trajectory(const MotionSpec& motion, const WorldConfig& world);

// Ground truth helpers used by experiment scoring.
Vector3d trajectory_position(const Trajectory& traj, double t);

}  // namespace doploc
