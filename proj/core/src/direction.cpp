#include "doploc/direction.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "doploc/geometry.hpp"

namespace doploc {

double angle_from_lambda(double lambda_x, double lambda_y) {
  const double r = std::hypot(lambda_x, lambda_y);
  if (r < 1e-300)
    throw std::runtime_error("angle_from_lambda: direction cosines vanish");
  const double a = std::asin(lambda_y / r);
  return lambda_x >= 0.0 ? a : kPi - a;
}

double relative_angle(double alpha_rad, double alpha0_rad) {
  return wrap_pi(kPi / 2.0 - alpha_rad - alpha0_rad);
}

DirectionFit fit_direction(const MotionIntegrals& motion,
                           const std::vector<double>& t_s,
                           const std::vector<double>& f_shift_hz,
                           double carrier_hz, double speed_of_sound,
                           double alpha0_rad) {
  const size_t n = motion.w_x.size();
  if (n < 8)
    throw std::invalid_argument("fit_direction: too few motion samples");
  if (t_s.size() != n || f_shift_hz.size() != n)
    throw std::invalid_argument("fit_direction: sample counts disagree");

  // Approach speed implied by the shift; positive when closing in, so the
  // fitted direction points from the phone toward the anchor.
  Eigen::VectorXd y(n);
  const double to_speed = speed_of_sound / carrier_hz;
  for (size_t i = 0; i < n; ++i) y(i) = to_speed * f_shift_hz[i];

  Eigen::MatrixXd X(n, 4);
  const double t0 = t_s.front();
  for (size_t i = 0; i < n; ++i) {
    X(i, 0) = motion.w_x[i];
    X(i, 1) = motion.w_y[i];
    X(i, 2) = 1.0;
    X(i, 3) = t_s[i] - t0;
  }

  // The motion must span both horizontal axes or the corresponding
  // direction cosine is free; report the degenerate axis by name.
  const double span_x = X.col(0).norm();
  const double span_y = X.col(1).norm();
  const double span_t = X.col(3).norm();
  const double floor_ws = 1e-6 * std::sqrt(static_cast<double>(n));
  if (span_x < floor_ws && span_y < floor_ws)
    throw std::runtime_error(
        "fit_direction: integrated motion is empty along both x and y");
  if (span_x < floor_ws)
    throw std::runtime_error(
        "fit_direction: integrated motion spans no x extent, the x direction "
        "cosine is unobservable");
  if (span_y < floor_ws)
    throw std::runtime_error(
        "fit_direction: integrated motion spans no y extent, the y direction "
        "cosine is unobservable");
  if (span_t < 1e-12)
    throw std::runtime_error(
        "fit_direction: window has no time extent, the drift ramp is "
        "unobservable");

  Eigen::Vector4d scale;
  for (int j = 0; j < 4; ++j) scale(j) = X.col(j).norm();
  Eigen::MatrixXd Xs = X * scale.cwiseInverse().asDiagonal();

  const Eigen::Matrix4d G = Xs.transpose() * Xs;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(G);
  const double ev_min = eig.eigenvalues().minCoeff();
  const double ev_max = eig.eigenvalues().maxCoeff();
  DirectionFit fit;
  fit.cond = ev_min > 0.0 ? std::sqrt(ev_max / ev_min) : 1e300;

  Eigen::Vector4d ls;
  if (fit.cond > 1e8) {
    fit.used_qr = true;
    ls = Xs.colPivHouseholderQr().solve(y);
  } else {
    ls = G.ldlt().solve(Xs.transpose() * y);
  }
  fit.lambda = ls.cwiseQuotient(scale);
  fit.residual_rms_hz = std::sqrt((X * fit.lambda - y).squaredNorm() / n) /
                        to_speed;
  fit.alpha_rad = angle_from_lambda(fit.lambda(0), fit.lambda(1));
  fit.alpha_rel_rad = relative_angle(fit.alpha_rad, alpha0_rad);
  return fit;
}

Eigen::Vector3d direction_3d(const std::vector<Eigen::Vector3d>& velocity,
                             const std::vector<double>& f_shift_hz,
                             double carrier_hz, double speed_of_sound) {
  const size_t n = velocity.size();
  if (n < 3) throw std::invalid_argument("direction_3d: too few samples");
  if (f_shift_hz.size() != n)
    throw std::invalid_argument("direction_3d: sample counts disagree");

  Eigen::MatrixXd U(n, 3);
  Eigen::VectorXd y(n);
  const double to_speed = speed_of_sound / carrier_hz;
  for (size_t i = 0; i < n; ++i) {
    U.row(i) = velocity[i].transpose();
    y(i) = to_speed * f_shift_hz[i];
  }

  const Eigen::Matrix3d G = U.transpose() * U;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(G);
  const double ev_max = eig.eigenvalues().maxCoeff();
  const double floor = std::max(1e-12, 1e-10 * ev_max);
  if (eig.eigenvalues().minCoeff() < floor) {
    // Name the axis the motion misses: the small eigenvector's dominant
    // component is the unobservable direction.
    Eigen::Vector3d v = eig.eigenvectors().col(0).cwiseAbs();
    int axis = 0;
    v.maxCoeff(&axis);
    const char* names[] = {"x", "y", "z"};
    std::ostringstream os;
    os << "direction_3d: velocities span no " << names[axis]
       << " extent, the " << names[axis] << " component is unobservable";
    throw std::runtime_error(os.str());
  }
  return G.ldlt().solve(U.transpose() * y);
}

std::array<double, 4> leg_shifts(double alpha_rad, double speed_mps,
                                 double carrier_hz, double speed_of_sound) {
  const double s = carrier_hz * speed_mps / speed_of_sound;
  return {s * std::sin(alpha_rad), s * std::cos(alpha_rad),
          -s * std::sin(alpha_rad), -s * std::cos(alpha_rad)};
}

double direction_from_legs(const std::array<double, 4>& leg_shift_hz,
                           const std::array<double, 4>& leg_speed_mps,
                           double carrier_hz, double speed_of_sound) {
  double scale = 0.0;
  for (double u : leg_speed_mps) {
    if (u <= 0.0)
      throw std::invalid_argument(
          "direction_from_legs: leg speeds must be positive");
    scale = std::max(scale, carrier_hz * u / speed_of_sound);
  }
  double f_max = 0.0;
  for (double f : leg_shift_hz) f_max = std::max(f_max, std::abs(f));
  if (f_max < 1e-9 * scale)
    throw std::runtime_error(
        "direction_from_legs: all shifts vanish, direction indeterminate");

  const double floor = 0.05 * scale;
  for (int i : {0, 1}) {
    const double a = leg_shift_hz[i], b = leg_shift_hz[i + 2];
    if (std::min(std::abs(a), std::abs(b)) > floor && a * b > 0.0) {
      std::ostringstream os;
      os << "direction_from_legs: legs " << i + 1 << " and " << i + 3
         << " carry the same sign (" << a << ", " << b
         << " Hz); opposite legs must cancel";
      throw std::runtime_error(os.str());
    }
  }

  auto cost = [&](double a) {
    const double sa = std::sin(a), ca = std::cos(a);
    const double k = carrier_hz / speed_of_sound;
    const double model[4] = {k * leg_speed_mps[0] * sa, k * leg_speed_mps[1] * ca,
                             -k * leg_speed_mps[2] * sa,
                             -k * leg_speed_mps[3] * ca};
    double c = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double d = leg_shift_hz[i] - model[i];
      c += d * d;
    }
    return c;
  };

  // One-dimensional and smooth with period 2*pi: coarse scan, then a
  // golden-section polish inside the best bracket.
  const int steps = 720;
  double best_a = -kPi / 2.0, best_c = cost(best_a);
  for (int i = 1; i < steps; ++i) {
    const double a = -kPi / 2.0 + 2.0 * kPi * i / steps;
    const double c = cost(a);
    if (c < best_c) {
      best_c = c;
      best_a = a;
    }
  }
  const double step = 2.0 * kPi / steps;
  double lo = best_a - step, hi = best_a + step;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double c1 = cost(x1), c2 = cost(x2);
  while (hi - lo > 1e-12) {
    if (c1 < c2) {
      hi = x2;
      x2 = x1;
      c2 = c1;
      x1 = hi - gr * (hi - lo);
      c1 = cost(x1);
    } else {
      lo = x1;
      x1 = x2;
      c1 = c2;
      x2 = lo + gr * (hi - lo);
      c2 = cost(x2);
    }
  }
  double a = 0.5 * (lo + hi);
  if (a < -kPi / 2.0) a += 2.0 * kPi;
  if (a >= 3.0 * kPi / 2.0) a -= 2.0 * kPi;
  return a;
}

}  // namespace doploc
