#include "doploc/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "doploc/csv_io.hpp"
#include "doploc/rng.hpp"

namespace doploc {
namespace {

// Quintic ease curve: C2, zero velocity and acceleration at both ends.
double smooth(double u) { return u * u * u * (10.0 + u * (-15.0 + 6.0 * u)); }
double smooth_d(double u) {
  const double k = u * (1.0 - u);
  return 30.0 * k * k;
}
constexpr double kSmoothPeak = 1.875;  // max of smooth_d, at u = 1/2
// Integral of smooth, for arc-length speed ramps.
double smooth_i(double u) {
  return u * u * u * u * (2.5 + u * (-3.0 + u));
}

// Planar path in local coordinates; t runs over [0, duration].
class PlanarModel {
 public:
  virtual ~PlanarModel() = default;
  virtual double duration() const = 0;
  virtual void eval(double t, Vector2d& p, Vector2d& v) const = 0;
};

// One traversal of an axis-aligned rectangle, pausing momentarily at each
// corner so every leg starts and ends at rest.
class RectLoop : public PlanarModel {
 public:
  RectLoop(double width, double height, TurnSense sense, double peak_speed) {
    const Vector2d c[4] = {{0, 0}, {width, 0}, {width, height}, {0, height}};
    for (int i = 0; i < 4; ++i) {
      int a = i, b = (i + 1) % 4;
      if (sense == TurnSense::cw) {  // reverse traversal order
        a = (4 - i) % 4;
        b = (3 - i) % 4;
      }
      legs_.push_back({c[a], c[b], (c[b] - c[a]).norm() * kSmoothPeak / peak_speed});
    }
  }

  double duration() const override {
    double s = 0;
    for (const Leg& l : legs_) s += l.T;
    return s;
  }

  void eval(double t, Vector2d& p, Vector2d& v) const override {
    for (const Leg& l : legs_) {
      if (t <= l.T) {
        const double u = std::clamp(t / l.T, 0.0, 1.0);
        p = l.a + (l.b - l.a) * smooth(u);
        v = (l.b - l.a) * (smooth_d(u) / l.T);
        return;
      }
      t -= l.T;
    }
    p = legs_.back().b;
    v.setZero();
  }

 private:
  struct Leg {
    Vector2d a, b;
    double T;
  };
  std::vector<Leg> legs_;
};

// One full revolution starting and ending at rest at the local origin.
class CircleLoop : public PlanarModel {
 public:
  CircleLoop(double radius, TurnSense sense, double peak_speed)
      : r_(radius),
        sign_(sense == TurnSense::acw ? 1.0 : -1.0),
        T_(kSmoothPeak * 2.0 * kPi * radius / peak_speed) {}

  double duration() const override { return T_; }

  void eval(double t, Vector2d& p, Vector2d& v) const override {
    const double u = std::clamp(t / T_, 0.0, 1.0);
    const double th = sign_ * 2.0 * kPi * smooth(u);
    const double w = sign_ * 2.0 * kPi * smooth_d(u) / T_;
    p = {-r_ + r_ * std::cos(th), r_ * std::sin(th)};
    v = {-r_ * std::sin(th) * w, r_ * std::cos(th) * w};
  }

 private:
  double r_, sign_, T_;
};

// Band-limited random wander: a short sum of incommensurate sinusoids under a
// rest-to-rest envelope, scaled to the requested extent and peak speed.
class ArbitraryLoop : public PlanarModel {
 public:
  ArbitraryLoop(double amplitude, double peak_speed, double duration,
                std::uint64_t seed)
      : T_(duration) {
    Rng rng(derive_seed(seed, RngStream::pattern_shape));
    for (int axis = 0; axis < 2; ++axis) {
      for (int k = 0; k < kTerms; ++k) {
        freq_[axis][k] = rng.uniform(0.7, 3.2);
        phase_[axis][k] = rng.uniform(0.0, 2.0 * kPi);
        amp_[axis][k] = 1.0 / (freq_[axis][k] * freq_[axis][k]);
      }
    }
    // Normalise on a fine grid; the shape is analytic so this is exact enough
    // to hold the bounds with a small safety factor.
    double max_p = 0, max_v = 0;
    const int n = static_cast<int>(duration * 2000);
    Vector2d p, v;
    scale_ = 1.0;
    for (int i = 0; i <= n; ++i) {
      eval(duration * i / n, p, v);
      max_p = std::max(max_p, p.norm());
      max_v = std::max(max_v, v.norm());
    }
    const double s_pos = max_p > 0 ? (amplitude / 2.0) / max_p : 1.0;
    const double s_vel = max_v > 0 ? peak_speed / max_v : 1.0;
    scale_ = std::min(s_pos, s_vel) * 0.999;
  }

  double duration() const override { return T_; }

  void eval(double t, Vector2d& p, Vector2d& v) const override {
    const double u = std::clamp(t / T_, 0.0, 1.0);
    // env rises over the first fifth and falls over the last fifth
    double env, env_d;
    if (u < 0.2) {
      env = smooth(u / 0.2);
      env_d = smooth_d(u / 0.2) / (0.2 * T_);
    } else if (u > 0.8) {
      env = smooth((1.0 - u) / 0.2);
      env_d = -smooth_d((1.0 - u) / 0.2) / (0.2 * T_);
    } else {
      env = 1.0;
      env_d = 0.0;
    }
    for (int axis = 0; axis < 2; ++axis) {
      double s = 0, sd = 0;
      for (int k = 0; k < kTerms; ++k) {
        const double w = 2.0 * kPi * freq_[axis][k];
        s += amp_[axis][k] * std::sin(w * t + phase_[axis][k]);
        sd += amp_[axis][k] * w * std::cos(w * t + phase_[axis][k]);
      }
      p[axis] = scale_ * env * s;
      v[axis] = scale_ * (env_d * s + env * sd);
    }
  }

 private:
  static constexpr int kTerms = 5;
  double T_, scale_ = 1.0;
  double freq_[2][kTerms], phase_[2][kTerms], amp_[2][kTerms];
};

// Loops chained back to back (each starts and ends at rest at the origin,
// except rectangle loops which traverse their own closed circuit).
class LoopChain : public PlanarModel {
 public:
  void add(std::unique_ptr<PlanarModel> m) {
    total_ += m->duration();
    parts_.push_back(std::move(m));
  }

  double duration() const override { return total_; }

  void eval(double t, Vector2d& p, Vector2d& v) const override {
    for (const auto& m : parts_) {
      if (t <= m->duration()) {
        m->eval(t, p, v);
        return;
      }
      t -= m->duration();
    }
    parts_.back()->eval(parts_.back()->duration(), p, v);
  }

  bool empty() const { return parts_.empty(); }

 private:
  std::vector<std::unique_ptr<PlanarModel>> parts_;
  double total_ = 0.0;
};

std::unique_ptr<PlanarModel> make_loop(MotionPattern pattern, int index,
                                       const MotionSpec& m) {
  const TurnSense sense = m.senses[index % m.senses.size()];
  switch (pattern) {
    case MotionPattern::rectangle:
      return std::make_unique<RectLoop>(m.amplitude_m, m.amplitude_m / 2.0,
                                        sense, m.peak_speed_mps);
    case MotionPattern::circle:
      return std::make_unique<CircleLoop>(m.amplitude_m / 2.0, sense,
                                          m.peak_speed_mps);
    default:
      throw std::logic_error("make_loop: not a loop pattern");
  }
}

std::unique_ptr<PlanarModel> build_shake(const MotionSpec& m) {
  auto chain = std::make_unique<LoopChain>();
  if (m.pattern == MotionPattern::arbitrary) {
    chain->add(std::make_unique<ArbitraryLoop>(m.amplitude_m, m.peak_speed_mps,
                                               m.duration_s, m.shape_seed));
    return chain;
  }
  int index = 0;
  while (chain->duration() < m.duration_s) {
    MotionPattern p = m.pattern;
    if (p == MotionPattern::mixed)
      p = (index % 2 == 0) ? MotionPattern::rectangle : MotionPattern::circle;
    chain->add(make_loop(p, index, m));
    ++index;
    if (index > 10000)
      throw std::runtime_error("gen_trajectory: shake loop does not advance");
  }
  return chain;
}

// Waypoint route with circular corner fillets, walked at a constant speed
// with smooth ramps at both ends.
class WalkModel {
 public:
  WalkModel(const std::vector<std::array<double, 2>>& pts, double speed)
      : speed_(speed) {
    std::vector<Vector2d> w;
    for (const auto& p : pts) w.emplace_back(p[0], p[1]);
    build(w);
    ramp_T_ = 1.5;
    const double ramp_len = speed_ * ramp_T_ * 0.5;  // integral of the ease curve
    if (length_ < 2.0 * ramp_len + 1e-6)
      throw std::invalid_argument("walk path too short for speed ramps");
    cruise_T_ = (length_ - 2.0 * ramp_len) / speed_;
    total_T_ = cruise_T_ + 2.0 * ramp_T_;
  }

  double duration() const { return total_T_; }
  double length() const { return length_; }

  void eval(double t, Vector2d& p, Vector2d& v, double& yaw) const {
    t = std::clamp(t, 0.0, total_T_);
    double s, sp;  // arc length and speed
    const double ramp_len = speed_ * ramp_T_ * 0.5;
    if (t < ramp_T_) {
      const double u = t / ramp_T_;
      s = speed_ * ramp_T_ * smooth_i(u);
      sp = speed_ * smooth(u);
    } else if (t < ramp_T_ + cruise_T_) {
      s = ramp_len + speed_ * (t - ramp_T_);
      sp = speed_;
    } else {
      const double u = (total_T_ - t) / ramp_T_;
      s = length_ - speed_ * ramp_T_ * smooth_i(u);
      sp = speed_ * smooth(u);
    }
    Vector2d tangent;
    point_at(s, p, tangent);
    v = sp * tangent;
    yaw = std::atan2(tangent.y(), tangent.x());
  }

 private:
  struct Piece {
    bool arc = false;
    Vector2d a;        // line start / arc center
    Vector2d dir;      // line unit direction
    double r = 0;      // arc radius
    double th0 = 0;    // arc start angle
    double sweep = 0;  // signed
    double len = 0;
  };

  void build(const std::vector<Vector2d>& w) {
    const double fillet = 0.4;
    Vector2d cur = w.front();
    for (size_t i = 1; i < w.size(); ++i) {
      const Vector2d a = cur;
      const Vector2d b = w[i];
      Vector2d cut_b = b;
      if (i + 1 < w.size()) {
        // Shorten this leg and the next by the fillet tangent length.
        const Vector2d c = w[i + 1];
        Vector2d d1 = (b - a).normalized();
        Vector2d d2 = (c - b).normalized();
        const double turn = std::acos(std::clamp(d1.dot(d2), -1.0, 1.0));
        if (turn > 1e-6 && turn < kPi - 1e-6) {
          double r = fillet;
          double tan_len = r * std::tan(turn / 2.0);
          const double avail =
              0.5 * std::min((b - a).norm(), (c - b).norm()) - 1e-9;
          if (tan_len > avail) {
            tan_len = avail;
            r = tan_len / std::tan(turn / 2.0);
          }
          cut_b = b - d1 * tan_len;
          add_line(a, cut_b);
          // Arc center sits off the corner, perpendicular to the approach.
          const double side = d1.x() * d2.y() - d1.y() * d2.x() > 0 ? 1.0 : -1.0;
          const Vector2d n1(-d1.y() * side, d1.x() * side);
          const Vector2d center = cut_b + n1 * r;
          Piece arc;
          arc.arc = true;
          arc.a = center;
          arc.r = r;
          arc.th0 = std::atan2(cut_b.y() - center.y(), cut_b.x() - center.x());
          arc.sweep = side * turn;
          arc.len = r * turn;
          pieces_.push_back(arc);
          length_ += arc.len;
          cur = b + d2 * tan_len;
          continue;
        }
      }
      add_line(a, cut_b);
      cur = b;
    }
    if (length_ <= 0) throw std::invalid_argument("walk path has zero length");
  }

  void add_line(const Vector2d& a, const Vector2d& b) {
    const double len = (b - a).norm();
    if (len < 1e-12) return;
    Piece p;
    p.a = a;
    p.dir = (b - a) / len;
    p.len = len;
    pieces_.push_back(p);
    length_ += len;
  }

  void point_at(double s, Vector2d& p, Vector2d& tangent) const {
    s = std::clamp(s, 0.0, length_);
    for (const Piece& pc : pieces_) {
      if (s <= pc.len + 1e-12) {
        if (!pc.arc) {
          p = pc.a + pc.dir * s;
          tangent = pc.dir;
        } else {
          const double th = pc.th0 + pc.sweep * (s / pc.len);
          p = pc.a + pc.r * Vector2d(std::cos(th), std::sin(th));
          const double sgn = pc.sweep >= 0 ? 1.0 : -1.0;
          tangent = sgn * Vector2d(-std::sin(th), std::cos(th));
        }
        return;
      }
      s -= pc.len;
    }
    const Piece& pc = pieces_.back();
    if (!pc.arc) {
      p = pc.a + pc.dir * pc.len;
      tangent = pc.dir;
    } else {
      const double th = pc.th0 + pc.sweep;
      p = pc.a + pc.r * Vector2d(std::cos(th), std::sin(th));
      const double sgn = pc.sweep >= 0 ? 1.0 : -1.0;
      tangent = sgn * Vector2d(-std::sin(th), std::cos(th));
    }
  }

  std::vector<Piece> pieces_;
  double speed_, length_ = 0.0;
  double ramp_T_ = 0.0, cruise_T_ = 0.0, total_T_ = 0.0;
};

// Full session model: rest, motion, rest, embedded in world coordinates.
class SessionModel {
 public:
  SessionModel(const MotionSpec& m, std::unique_ptr<PlanarModel> shake,
               std::unique_ptr<WalkModel> walk)
      : m_(m), shake_(std::move(shake)), walk_(std::move(walk)) {
    start_ = Vector3d(m.start_m[0], m.start_m[1], m.start_m[2]);
    const double yaw = m.plane_yaw_rad;
    e1_ = Vector3d(std::cos(yaw), std::sin(yaw), 0.0);
    e2_ = m.vertical_plane ? Vector3d(0.0, 0.0, 1.0)
                           : Vector3d(-std::sin(yaw), std::cos(yaw), 0.0);
    motion_T_ = walk_ ? walk_->duration() : shake_->duration();
  }

  double total() const { return m_.rest_lead_s + motion_T_ + m_.rest_tail_s; }

  void eval(double t, Vector3d& p, Vector3d& v, double& yaw) const {
    yaw = m_.phone_yaw_rad;
    const double tm = t - m_.rest_lead_s;
    if (walk_) {
      Vector2d wp, wv;
      double wyaw;
      walk_->eval(std::clamp(tm, 0.0, motion_T_), wp, wv, wyaw);
      p = Vector3d(wp.x(), wp.y(), 0.0) + Vector3d(0, 0, start_.z());
      v = (tm >= 0.0 && tm <= motion_T_) ? Vector3d(wv.x(), wv.y(), 0.0)
                                         : Vector3d::Zero();
      yaw = wyaw;
      return;
    }
    Vector2d sp{0, 0}, sv{0, 0};
    if (tm >= 0.0 && tm <= motion_T_) shake_->eval(tm, sp, sv);
    else if (tm > motion_T_) shake_->eval(motion_T_, sp, sv), sv.setZero();
    p = start_ + sp.x() * e1_ + sp.y() * e2_;
    v = sv.x() * e1_ + sv.y() * e2_;
  }

 private:
  const MotionSpec m_;
  std::unique_ptr<PlanarModel> shake_;
  std::unique_ptr<WalkModel> walk_;
  Vector3d start_, e1_, e2_;
  double motion_T_ = 0.0;
};

}  // namespace

Trajectory gen_trajectory(const MotionSpec& motion, const WorldConfig& world) {
  std::unique_ptr<PlanarModel> shake;
  std::unique_ptr<WalkModel> walk;
  if (motion.pattern == MotionPattern::walk) {
    if (motion.waypoints_m.size() < 2)
      throw std::invalid_argument("gen_trajectory: walk needs waypoints");
    walk = std::make_unique<WalkModel>(motion.waypoints_m, motion.walk_speed_mps);
  } else {
    shake = build_shake(motion);
  }
  SessionModel model(motion, std::move(shake), std::move(walk));

  Trajectory traj;
  traj.imu_rate_hz = world.imu_rate_hz;
  traj.audio_rate_hz = world.audio_rate_hz;

  const double total = model.total();
  const size_t n_audio = static_cast<size_t>(std::llround(total * world.audio_rate_hz)) + 1;
  traj.audio_p.resize(n_audio);
  traj.audio_v.resize(n_audio);
  double yaw;
  for (size_t k = 0; k < n_audio; ++k)
    model.eval(k / world.audio_rate_hz, traj.audio_p[k], traj.audio_v[k], yaw);

  const double dt = 1.0 / world.imu_rate_hz;
  const size_t n_imu = static_cast<size_t>(std::floor(total * world.imu_rate_hz)) + 1;
  // Two extra analytic points past the end feed the forward differences.
  std::vector<Vector3d> pos(n_imu + 2);
  std::vector<double> yaws(n_imu);
  Vector3d vtmp;
  for (size_t k = 0; k < n_imu + 2; ++k) {
    double y = 0;
    model.eval(k * dt, pos[k], vtmp, y);
    if (k < n_imu) yaws[k] = y;
  }
  traj.imu.resize(n_imu);
  for (size_t k = 0; k < n_imu; ++k) {
    TrajectorySample& s = traj.imu[k];
    s.t = k * dt;
    s.p = pos[k];
    s.v = (pos[k + 1] - pos[k]) / dt;
    const Vector3d v_next = (pos[k + 2] - pos[k + 1]) / dt;
    s.a = (v_next - s.v) / dt;
    s.q = Eigen::Quaterniond(
        Eigen::AngleAxisd(yaws[k], Vector3d::UnitZ()));
  }
  return traj;
}

Vector3d trajectory_position(const Trajectory& traj, double t) {
  if (traj.audio_p.empty()) throw std::logic_error("trajectory_position: empty");
  const double x = t * traj.audio_rate_hz;
  if (x <= 0) return traj.audio_p.front();
  const size_t i = static_cast<size_t>(x);
  if (i + 1 >= traj.audio_p.size()) return traj.audio_p.back();
  const double f = x - i;
  return (1.0 - f) * traj.audio_p[i] + f * traj.audio_p[i + 1];
}

void Trajectory::write_csv(const std::string& path) const {
  CsvWriter w(path);
  w.header("t,px,py,pz,vx,vy,vz,ax,ay,az,qw,qx,qy,qz");
  for (const TrajectorySample& s : imu)
    w.row_numeric({s.t, s.p.x(), s.p.y(), s.p.z(), s.v.x(), s.v.y(), s.v.z(),
                   s.a.x(), s.a.y(), s.a.z(), s.q.w(), s.q.x(), s.q.y(),
                   s.q.z()});
}

}  // namespace doploc
