#include "doploc/localization.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "doploc/geometry.hpp"

namespace doploc {
namespace {

// Opening angles this close to 0 or pi give arcs of unbounded radius that
// constrain nothing; such pairs are dropped rather than solved.
constexpr double kDegenerateOpening = 0.005;

double cross2(const Vector2d& u, const Vector2d& v) {
  return u.x() * v.y() - u.y() * v.x();
}

// Derivative-free descent: axis and diagonal probes with halving steps.
template <typename Cost, typename Admit>
Vector2d pattern_search(Vector2d p, double step, double step_min, Cost cost,
                        Admit admissible) {
  static const double dirs[8][2] = {{1, 0},  {-1, 0}, {0, 1},  {0, -1},
                                    {1, 1},  {1, -1}, {-1, 1}, {-1, -1}};
  double best = cost(p);
  while (step >= step_min) {
    bool moved = false;
    for (const auto& d : dirs) {
      const Vector2d q(p.x() + step * d[0], p.y() + step * d[1]);
      if (!admissible(q)) continue;
      const double c = cost(q);
      if (c < best) {
        best = c;
        p = q;
        moved = true;
      }
    }
    if (!moved) step *= 0.5;
  }
  return p;
}

}  // namespace

double opening_angle(double alpha_i_rad, double alpha_j_rad) {
  return std::abs(wrap_pi(alpha_i_rad - alpha_j_rad));
}

Circle circle_from_pair(const Vector2d& a, const Vector2d& b,
                        double opening_rad, int side) {
  if (side != 1 && side != -1)
    throw std::invalid_argument("circle_from_pair: side must be +1 or -1");
  if (opening_rad <= 0.0 || opening_rad >= kPi)
    throw std::invalid_argument(
        "circle_from_pair: opening angle must lie in (0, pi)");
  const Vector2d chord = b - a;
  const double d = chord.norm();
  if (d < 1e-12)
    throw std::invalid_argument("circle_from_pair: anchors coincide");
  const double s = std::sin(opening_rad);
  if (s < 1e-9)
    throw std::invalid_argument("circle_from_pair: opening angle degenerate");

  Circle c;
  c.radius = d / (2.0 * s);
  // Acute angles put the center on the arc's side of the chord, obtuse on
  // the far side, a right angle exactly on it; cot carries all three.
  const double h = (d / 2.0) * (std::cos(opening_rad) / s);
  const Vector2d left(-chord.y() / d, chord.x() / d);
  c.center = 0.5 * (a + b) + (side * h) * left;
  return c;
}

double arc_distance(const Vector2d& p, const Vector2d& a, const Vector2d& b,
                    double opening_rad) {
  const double cr = cross2(b - a, p - a);
  const int side = cr >= 0.0 ? 1 : -1;
  const Circle c = circle_from_pair(a, b, opening_rad, side);
  const Vector2d q = p - c.center;
  const double r = q.norm();
  if (r < 1e-12) return c.radius;
  const Vector2d proj = c.center + q * (c.radius / r);
  // The valid arc is the part of the circle on p's side of the chord.
  if (cross2(b - a, proj - a) * side >= 0.0)
    return std::abs(r - c.radius);
  return std::min((p - a).norm(), (p - b).norm());
}

std::vector<ArcConstraint> arcs_from_bearings(
    const std::vector<AnchorNode>& anchors,
    const std::vector<double>& bearing_rad) {
  if (anchors.size() != bearing_rad.size())
    throw std::invalid_argument(
        "arcs_from_bearings: anchor and bearing counts disagree");
  std::vector<ArcConstraint> arcs;
  for (size_t i = 0; i < anchors.size(); ++i) {
    for (size_t j = i + 1; j < anchors.size(); ++j) {
      const double open = opening_angle(bearing_rad[i], bearing_rad[j]);
      if (open < kDegenerateOpening || open > kPi - kDegenerateOpening)
        continue;
      ArcConstraint arc;
      arc.a = Vector2d(anchors[i].x_m, anchors[i].y_m);
      arc.b = Vector2d(anchors[j].x_m, anchors[j].y_m);
      arc.opening_rad = open;
      arcs.push_back(arc);
    }
  }
  return arcs;
}

InitialFix locate_initial(const std::vector<ArcConstraint>& arcs,
                          const SearchRegion& region) {
  if (arcs.size() < 3) {
    std::ostringstream os;
    os << "locate_initial: " << arcs.size()
       << " usable arcs (need 3); degenerate pairs were dropped";
    throw std::invalid_argument(os.str());
  }
  if (!(region.x_max_m > region.x_min_m && region.y_max_m > region.y_min_m))
    throw std::invalid_argument("locate_initial: empty search region");

  auto cost = [&](const Vector2d& p) {
    double c = 0.0;
    for (const ArcConstraint& arc : arcs)
      c += arc_distance(p, arc.a, arc.b, arc.opening_rad);
    return c;
  };
  auto in_region = [&](const Vector2d& p) { return region.contains(p); };

  const double cell = 0.25;
  const int nx = std::max(2, static_cast<int>(
                                 std::ceil((region.x_max_m - region.x_min_m) / cell)) +
                                 1);
  const int ny = std::max(2, static_cast<int>(
                                 std::ceil((region.y_max_m - region.y_min_m) / cell)) +
                                 1);
  std::vector<double> grid(static_cast<size_t>(nx) * ny);
  auto at = [&](int ix, int iy) -> double& {
    return grid[static_cast<size_t>(iy) * nx + ix];
  };
  auto point = [&](int ix, int iy) {
    return Vector2d(
        region.x_min_m + (region.x_max_m - region.x_min_m) * ix / (nx - 1),
        region.y_min_m + (region.y_max_m - region.y_min_m) * iy / (ny - 1));
  };

  int best_ix = 0, best_iy = 0;
  double best_c = 1e300;
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const double c = cost(point(ix, iy));
      at(ix, iy) = c;
      if (c < best_c) {
        best_c = c;
        best_ix = ix;
        best_iy = iy;
      }
    }
  }

  InitialFix fix;
  fix.pairs_used = static_cast<int>(arcs.size());
  fix.position = pattern_search(point(best_ix, best_iy), cell, 1e-3, cost,
                                in_region);
  fix.objective = cost(fix.position);
  for (const ArcConstraint& arc : arcs)
    fix.residuals.push_back(
        arc_distance(fix.position, arc.a, arc.b, arc.opening_rad));

  // A second grid basin nearly as deep as the refined minimum means the
  // arcs admit more than one consistent position.
  const Vector2d best_p = point(best_ix, best_iy);
  for (int iy = 1; iy + 1 < ny && !fix.ambiguous; ++iy) {
    for (int ix = 1; ix + 1 < nx; ++ix) {
      const double c = at(ix, iy);
      if (c > 2.0 * fix.objective + 1e-9) continue;
      if (c > at(ix - 1, iy) || c > at(ix + 1, iy) || c > at(ix, iy - 1) ||
          c > at(ix, iy + 1))
        continue;
      if ((point(ix, iy) - best_p).norm() < 1.0) continue;
      fix.ambiguous = true;
      break;
    }
  }

  // Concyclic layouts leave the objective flat along the common circle;
  // compare finite-difference curvature across probe directions.
  const double h = 0.05;
  double curv_min = 1e300, curv_max = 0.0;
  const double c0 = fix.objective;
  for (int d = 0; d < 4; ++d) {
    const double ang = d * kPi / 4.0;
    const Vector2d u(std::cos(ang), std::sin(ang));
    const double cp = cost(fix.position + h * u);
    const double cm = cost(fix.position - h * u);
    const double curv = (cp - 2.0 * c0 + cm) / (h * h);
    curv_min = std::min(curv_min, curv);
    curv_max = std::max(curv_max, curv);
  }
  fix.near_concyclic = curv_max <= 0.0 || curv_min < 0.05 * curv_max;
  return fix;
}

StepTracker::StepTracker(std::vector<AnchorNode> anchors,
                         double speed_of_sound, double phone_z_m,
                         const Vector2d& initial_position, double step_s,
                         double search_radius_m)
    : anchors_(std::move(anchors)),
      v_sound_(speed_of_sound),
      phone_z_(phone_z_m),
      step_s_(step_s),
      radius_(search_radius_m),
      position_(initial_position) {
  if (anchors_.empty())
    throw std::invalid_argument("StepTracker: no anchors");
}

double StepTracker::range_to(int anchor, const Vector2d& p) const {
  const AnchorNode& a = anchors_[anchor];
  const double dx = p.x() - a.x_m;
  const double dy = p.y() - a.y_m;
  const double dz = a.height_m - phone_z_;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

TrackFix StepTracker::step(const std::vector<StepObservation>& obs) {
  t_s_ += step_s_;
  TrackFix fix;
  fix.t_s = t_s_;

  std::vector<int> idx;
  std::vector<double> range;
  for (const StepObservation& o : obs) {
    if (!o.locked) continue;
    if (o.anchor_index < 0 ||
        o.anchor_index >= static_cast<int>(anchors_.size()))
      throw std::invalid_argument("StepTracker: anchor index out of range");
    // Phase advance shortens the range: positive delta means approach.
    const double lambda_scale =
        v_sound_ / (2.0 * kPi * anchors_[o.anchor_index].freq_hz);
    idx.push_back(o.anchor_index);
    range.push_back(range_to(o.anchor_index, position_) -
                    lambda_scale * o.delta_phi_rad);
  }
  fix.n_locked = static_cast<int>(idx.size());

  if (fix.n_locked < 2) {
    fix.dead_reckoned = true;
    fix.position = position_;
    fix.objective = 0.0;
    widen_ = std::min(widen_ + radius_, 2.0);
    return fix;
  }

  const Vector2d anchor_p = position_;
  const double max_r = radius_ + widen_;
  auto cost = [&](const Vector2d& p) {
    double c = 0.0;
    for (size_t i = 0; i < idx.size(); ++i)
      c += std::abs(range[i] - range_to(idx[i], p));
    return c;
  };
  auto admissible = [&](const Vector2d& p) {
    return (p - anchor_p).norm() <= max_r;
  };
  position_ = pattern_search(position_, 0.2, 1e-3, cost, admissible);
  widen_ = 0.0;
  fix.position = position_;
  fix.objective = cost(position_);
  return fix;
}

}  // namespace doploc
