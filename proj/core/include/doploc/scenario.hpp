#pragma once
// Scenario description: world constants, fixed acoustic anchors, scripted
// phone motion, and the frequency plan that keeps anchors separable.
// Scenarios load from a line-oriented config format documented in the README;
// field names carry their units.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "doploc/geometry.hpp"

namespace doploc {

struct WorldConfig {
  double speed_of_sound_mps = 340.0;
  double audio_rate_hz = 44100.0;
  double imu_rate_hz = 200.0;
  // RMS of the white background noise added by the receiver, relative to
  // full scale. NaN or -inf means noiseless.
  double noise_floor_dbfs = -60.0;
  double max_phone_speed_mps = 2.0;  // shake design bound, sets Doppler width
};

// A stationary speaker playing one continuous tone. Height is the vertical
// offset from the plane the phone travels in.
struct AnchorNode {
  std::string id;
  double x_m = 0.0;
  double y_m = 0.0;
  double height_m = 0.0;
  double freq_hz = 19000.0;
  double level_dbfs_at_1m = -20.0;
  // Emitter facing, for the optional cosine-power directivity model.
  double azimuth_rad = 0.0;
  double elevation_rad = 0.0;
  double directivity_exponent = 0.0;  // 0 = omnidirectional

  Vector3d position() const { return {x_m, y_m, height_m}; }
};

enum class MotionPattern { mixed, circle, rectangle, arbitrary, walk };
enum class TurnSense : std::uint8_t { cw, acw };

struct MotionSpec {
  MotionPattern pattern = MotionPattern::mixed;
  // Loop handedness sequence for shake patterns, applied per sub-loop.
  std::vector<TurnSense> senses{TurnSense::cw, TurnSense::acw, TurnSense::cw,
                                TurnSense::acw};
  double amplitude_m = 0.10;    // pattern extent bound; hand shakes stay small
  double peak_speed_mps = 2.0;  // <= WorldConfig::max_phone_speed_mps
  double duration_s = 4.0;      // shake portion, excluding rest periods
  double rest_lead_s = 0.5;     // still period used for frame initialisation
  double rest_tail_s = 0.25;
  bool vertical_plane = false;  // shake plane: horizontal (default) or vertical
  double plane_yaw_rad = 0.0;   // bearing of the in-plane first axis
  double phone_yaw_rad = 0.0;   // device x axis bearing; constant during shakes
  std::array<double, 3> start_m{0.0, 0.0, 0.0};
  std::uint64_t shape_seed = 0;  // pattern "arbitrary" draws its shape from this
  // Walk-specific fields.
  double walk_speed_mps = 1.2;
  std::vector<std::array<double, 2>> waypoints_m;
};

// Rectangular region searched by the initial position solver.
struct SearchRegion {
  double x_min_m = 0.0, x_max_m = 0.0, y_min_m = 0.0, y_max_m = 0.0;
  bool contains(const Vector2d& p) const {
    return p.x() >= x_min_m && p.x() <= x_max_m && p.y() >= y_min_m &&
           p.y() <= y_max_m;
  }
};

struct Scenario {
  WorldConfig world;
  std::vector<AnchorNode> anchors;
  MotionSpec motion;
  SearchRegion region;  // defaults to the anchor bounding box plus margin
  std::string source_digest;  // FNV-1a of the config text, for run manifests
};

// Thrown on malformed config or violated scenario invariants; the message
// names the file, line, and field involved.
struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& text, const std::string& name);

// Frequency plan for a band shared by several anchors. Each carrier needs
// its Doppler-widened pass band to itself; capacity is the count the band
// supports by pure division, centers are concrete guard-banded placements
// (never overlapping, so there may be fewer than `capacity`).
struct ChannelPlan {
  double band_low_hz = 0.0;
  double band_high_hz = 0.0;
  double pass_band_hz = 0.0;  // 2 * v_max * f_design / v_sound
  double guard_hz = 0.0;      // extra spacing between placed channels
  int capacity = 0;
  std::vector<double> centers_hz;
};

ChannelPlan plan_channels(double band_low_hz, double band_high_hz,
                          double v_max_mps, double v_sound_mps,
                          double design_freq_hz);

// Worst-case direction error caused by treating a shake of extent d as a
// point measurement at range L, and the matching displacement error.
struct AngleErrorBound {
  double angle_rad = 0.0;
  double displacement_m = 0.0;
};

AngleErrorBound bound_angle_error(double extent_m, double range_m);

// Doppler-widened band occupied by one carrier.
inline double doppler_pass_band_hz(double freq_hz, double v_max_mps,
                                   double v_sound_mps) {
  return 2.0 * v_max_mps * freq_hz / v_sound_mps;
}

std::uint64_t fnv1a64(const std::string& data);

}  // namespace doploc
