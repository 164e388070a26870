#pragma once

#include <vector>

#include "doploc/scenario.hpp"

namespace doploc {

// One anchor pair plus the opening angle under which the phone sees it.
// The locus of consistent positions is a circular arc on each side of the
// chord; the acute/right/obtuse cases place the center on the phone's
// side, on the chord, or opposite.
struct ArcConstraint {
  Vector2d a{0.0, 0.0}, b{0.0, 0.0};  // anchor ground positions
  double opening_rad = 0.0;           // in (0, pi)
};

double opening_angle(double alpha_i_rad, double alpha_j_rad);

// All usable pairs from per-anchor bearings; pairs whose opening angle is
// degenerate (near 0 or pi, unbounded radius) are dropped.
std::vector<ArcConstraint> arcs_from_bearings(
    const std::vector<AnchorNode>& anchors,
    const std::vector<double>& bearing_rad);

// Circle carrying the arc for the given side (+1 = left of a->b, -1 =
// right). Every point of that side's arc sees the chord under the angle.
struct Circle {
  Vector2d center;
  double radius;
};
Circle circle_from_pair(const Vector2d& a, const Vector2d& b,
                        double opening_rad, int side);

// Distance from p to the valid arc: radial when the projection lands on
// the arc, else to the nearest chord endpoint.
double arc_distance(const Vector2d& p, const Vector2d& a, const Vector2d& b,
                    double opening_rad);

struct InitialFix {
  Vector2d position{0.0, 0.0};
  double objective = 0.0;              // sum of arc distances at position
  std::vector<double> residuals;       // per usable pair, same order
  bool ambiguous = false;              // second basin nearly as good
  bool near_concyclic = false;         // objective valley nearly flat
  int pairs_used = 0;
};

// Grid search over the region followed by local refinement; needs arcs
// from at least three anchors to pin a point.
InitialFix locate_initial(const std::vector<ArcConstraint>& arcs,
                          const SearchRegion& region);

// Phase-continuous tracking: each step shortens the previous fix's anchor
// ranges by the observed phase advance and re-solves the position nearby.
struct StepObservation {
  int anchor_index = 0;
  double delta_phi_rad = 0.0;
  bool locked = true;
};

struct TrackFix {
  double t_s = 0.0;
  Vector2d position{0.0, 0.0};
  double objective = 0.0;
  int n_locked = 0;
  bool dead_reckoned = false;
};

class StepTracker {
 public:
  StepTracker(std::vector<AnchorNode> anchors, double speed_of_sound,
              double phone_z_m, const Vector2d& initial_position,
              double step_s = 0.25, double search_radius_m = 0.8);

  TrackFix step(const std::vector<StepObservation>& obs);
  const Vector2d& position() const { return position_; }

 private:
  double range_to(int anchor, const Vector2d& p) const;

  std::vector<AnchorNode> anchors_;
  double v_sound_, phone_z_, step_s_, radius_;
  Vector2d position_;
  double t_s_ = 0.0;
  double widen_ = 0.0;  // extra radius granted after dead-reckoned steps
};

}  // namespace doploc
