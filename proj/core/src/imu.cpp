#include "doploc/imu.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "doploc/csv_io.hpp"
#include "doploc/rng.hpp"

namespace doploc {

ImuStream synthesize_imu(const Trajectory& traj, const Vector3d& accel_bias_world,
                         double accel_noise_std, double gyro_noise_std,
                         std::uint64_t seed, const Vector3d& gyro_bias_device) {
  if (traj.imu.empty())
    throw std::invalid_argument("synthesize_imu: trajectory has no inertial track");
  ImuStream out;
  out.rate_hz = traj.imu_rate_hz;
  out.samples.resize(traj.imu.size());
  const Vector3d g(0.0, 0.0, kStandardGravity);
  const double dt = traj.imu_dt();
  Rng accel_rng(derive_seed(seed, RngStream::accel_noise));
  Rng gyro_rng(derive_seed(seed, RngStream::gyro_noise));

  for (size_t k = 0; k < traj.imu.size(); ++k) {
    const TrajectorySample& s = traj.imu[k];
    ImuSample& m = out.samples[k];
    m.t = s.t;
    const Eigen::Matrix3d R_wd = s.q.toRotationMatrix().transpose();
    m.accel = R_wd * (s.a + g + accel_bias_world);
    if (accel_noise_std > 0.0)
      m.accel += accel_noise_std * Vector3d(accel_rng.gaussian(),
                                            accel_rng.gaussian(),
                                            accel_rng.gaussian());
    // Interval-average body rates, consistent with q[k+1] = q[k] * exp(w*T).
    if (k + 1 < traj.imu.size()) {
      const Eigen::Quaterniond rel = s.q.conjugate() * traj.imu[k + 1].q;
      const Eigen::AngleAxisd aa(rel);
      m.gyro = (aa.angle() / dt) * aa.axis();
    }
    m.gyro += gyro_bias_device;
    if (gyro_noise_std > 0.0)
      m.gyro += gyro_noise_std * Vector3d(gyro_rng.gaussian(),
                                          gyro_rng.gaussian(),
                                          gyro_rng.gaussian());
  }
  return out;
}

void ImuStream::write_csv(const std::string& path) const {
  CsvWriter w(path);
  w.header("t,ax,ay,az,gx,gy,gz");
  for (const ImuSample& s : samples)
    w.row_numeric({s.t, s.accel.x(), s.accel.y(), s.accel.z(), s.gyro.x(),
                   s.gyro.y(), s.gyro.z()});
}

double FrameEstimate::alpha0(size_t k) const {
  const Vector3d ex = q[k] * Vector3d::UnitX();
  return -std::atan2(ex.y(), ex.x());
}

double FrameEstimate::tilt(size_t k) const {
  const Vector3d ez = q[k] * Vector3d::UnitZ();
  return std::acos(std::min(1.0, std::max(-1.0, ez.z())));
}

FrameEstimate estimate_wcs_frame(const ImuStream& imu, double init_window_s) {
  if (imu.samples.empty())
    throw std::invalid_argument("estimate_wcs_frame: empty stream");
  const double t0 = imu.samples.front().t;
  size_t init_end = 0;
  Vector3d mean = Vector3d::Zero();
  // Samples follow the forward-difference convention, so the accel of the
  // last sample before the window edge already contains the first moving
  // interval. Keep only samples whose difference stencil closes inside the
  // window; the margin is midpoint-safe against rounded timestamps.
  while (init_end < imu.samples.size() &&
         imu.samples[init_end].t < t0 + init_window_s - 1.5 * imu.dt()) {
    mean += imu.samples[init_end].accel;
    ++init_end;
  }
  if (init_end < 8)
    throw std::runtime_error("estimate_wcs_frame: initialization window too short");
  mean /= static_cast<double>(init_end);

  // The window must be quiet: gravity dominant and steady, no rotation.
  double max_dev = 0.0, max_gyro = 0.0;
  for (size_t k = 0; k < init_end; ++k) {
    max_dev = std::max(max_dev, (imu.samples[k].accel - mean).norm());
    max_gyro = std::max(max_gyro, imu.samples[k].gyro.norm());
  }
  if (max_dev > 0.3 || max_gyro > 0.05 || mean.norm() < 5.0) {
    std::ostringstream os;
    os << "estimate_wcs_frame: initialization window not static (accel dev "
       << max_dev << " m/s^2, gyro " << max_gyro << " rad/s)";
    throw std::runtime_error(os.str());
  }

  // World axes expressed in the device frame at t0.
  const Vector3d z_w = mean.normalized();
  Vector3d x_raw = Vector3d::UnitX() - Vector3d::UnitX().dot(z_w) * z_w;
  if (x_raw.norm() < 1e-6)  // device on edge; fall back to its y axis
    x_raw = Vector3d::UnitY() - Vector3d::UnitY().dot(z_w) * z_w;
  const Vector3d x_w = x_raw.normalized();
  const Vector3d y_w = z_w.cross(x_w);
  Eigen::Matrix3d R0;  // device -> world: rows are world axes
  R0.row(0) = x_w;
  R0.row(1) = y_w;
  R0.row(2) = z_w;

  FrameEstimate fr;
  fr.gravity_mag = mean.norm();
  fr.init_window_s = init_window_s;
  fr.init_end_index = init_end;
  fr.q.resize(imu.samples.size());
  Eigen::Quaterniond q0(R0);
  q0.normalize();
  const double dt = imu.dt();
  for (size_t k = 0; k < imu.samples.size(); ++k) {
    if (k < init_end) {
      fr.q[k] = q0;
      continue;
    }
    // Body-frame gyro propagation; renormalising keeps the rotation
    // orthonormal to machine precision over arbitrarily long streams.
    const Vector3d w = imu.samples[k - 1].gyro;
    const double ang = w.norm() * dt;
    Eigen::Quaterniond step(Eigen::Quaterniond::Identity());
    if (ang > 0.0)
      step = Eigen::Quaterniond(Eigen::AngleAxisd(ang, w.normalized()));
    fr.q[k] = (fr.q[k - 1] * step).normalized();
  }
  return fr;
}

MotionIntegrals integrate_motion(const ImuStream& imu, const FrameEstimate& frame,
                                 double t_begin, double t_end) {
  if (frame.q.size() != imu.samples.size())
    throw std::invalid_argument("integrate_motion: frame does not match stream");
  MotionIntegrals out;
  out.align_offset_s = 0.5 * imu.dt();
  const double dt = imu.dt();
  const Vector3d g(0.0, 0.0, kStandardGravity);
  double wx = 0.0, wy = 0.0;
  bool first = true;
  for (size_t k = 0; k < imu.samples.size(); ++k) {
    const ImuSample& s = imu.samples[k];
    if (s.t < t_begin || s.t >= t_end) continue;
    if (first) {
      out.t_begin = s.t;
      first = false;
    }
    const Vector3d a_w = frame.q[k] * s.accel - g;
    out.t.push_back(s.t - out.t_begin);
    out.w_x.push_back(wx);  // sum over i < k, so the integrand is excluded
    out.w_y.push_back(wy);
    out.a_x.push_back(a_w.x());
    out.a_y.push_back(a_w.y());
    wx += dt * a_w.x();
    wy += dt * a_w.y();
  }
  if (out.t.size() < 4)
    throw std::invalid_argument("integrate_motion: window holds fewer than 4 samples");
  return out;
}

}  // namespace doploc
