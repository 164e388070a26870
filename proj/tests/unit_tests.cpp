// Pure-math checks: parsing, planning, filter design, trackers on synthetic
// inputs, and the localization geometry against brute-force oracles.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "doploc/agc.hpp"
#include "doploc/direction.hpp"
#include "doploc/experiment.hpp"
#include "doploc/fir.hpp"
#include "doploc/geometry.hpp"
#include "doploc/localization.hpp"
#include "doploc/pll.hpp"
#include "doploc/rng.hpp"
#include "doploc/scenario.hpp"
#include "doploc/spectrum.hpp"

using namespace doploc;

namespace {

std::string scenario_path(const char* stem) {
  return std::string(DOPLOC_SCENARIO_DIR) + "/" + stem;
}

bool message_contains(const std::exception& e, const char* needle) {
  return std::string(e.what()).find(needle) != std::string::npos;
}

// Angle under which p sees the segment ab, in [0, pi].
double subtended(const Vector2d& p, const Vector2d& a, const Vector2d& b) {
  const Vector2d u = a - p, v = b - p;
  const double c = u.dot(v) / (u.norm() * v.norm());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

double cross2(const Vector2d& u, const Vector2d& v) {
  return u.x() * v.y() - u.y() * v.x();
}

double filter_mag(const std::vector<double>& h, double f, double rate) {
  std::complex<double> acc{0.0, 0.0};
  for (size_t k = 0; k < h.size(); ++k)
    acc += h[k] * std::polar(1.0, -2.0 * kPi * f * static_cast<double>(k) / rate);
  return std::abs(acc);
}

PcmStream tone(double freq_hz, double amplitude, double duration_s,
               double rate_hz = 44100.0) {
  PcmStream s;
  s.rate_hz = rate_hz;
  const size_t n = static_cast<size_t>(duration_s * rate_hz);
  s.samples.resize(n);
  for (size_t k = 0; k < n; ++k)
    s.samples[k] = amplitude * std::sin(2.0 * kPi * freq_hz * k / rate_hz);
  return s;
}

}  // namespace

TEST_CASE("angle wrapping stays on the chosen branch") {
  CHECK(wrap_pi(0.0) == 0.0);
  CHECK(wrap_pi(kPi) == doctest::Approx(kPi));
  CHECK(wrap_pi(-kPi) == doctest::Approx(kPi));
  CHECK(wrap_pi(2.0 * kPi) == doctest::Approx(0.0));
  for (double a = -12.0; a <= 12.0; a += 0.0137) {
    const double w = wrap_pi(a);
    CHECK(w > -kPi - 1e-12);
    CHECK(w <= kPi + 1e-12);
    const double k = (a - w) / (2.0 * kPi);
    CHECK(std::abs(k - std::round(k)) < 1e-9);

    const double b = wrap_bearing(a);
    CHECK(b >= -kPi / 2.0 - 1e-12);
    CHECK(b < 3.0 * kPi / 2.0);
    const double k2 = (a - b) / (2.0 * kPi);
    CHECK(std::abs(k2 - std::round(k2)) < 1e-9);
  }
  CHECK(angle_dist(0.1, 0.1) == 0.0);
  CHECK(angle_dist(-kPi / 2, kPi / 2) == doctest::Approx(kPi));
  CHECK(angle_dist(0.1, 2.0 * kPi + 0.3) == doctest::Approx(0.2));
}

TEST_CASE("level conversions round trip") {
  CHECK(dbfs_to_amplitude(-20.0) == doctest::Approx(0.1));
  CHECK(dbfs_to_amplitude(0.0) == doctest::Approx(1.0));
  for (double db = -80.0; db <= 0.0; db += 7.3)
    CHECK(amplitude_to_dbfs(dbfs_to_amplitude(db)) == doctest::Approx(db));
}

TEST_CASE("random streams are deterministic and decorrelated") {
  Rng a(1234), b(1234), c(1235);
  bool all_equal = true, any_differ = false;
  for (int i = 0; i < 64; ++i) {
    const std::uint64_t x = a.next_u64();
    all_equal = all_equal && (x == b.next_u64());
    any_differ = any_differ || (x != c.next_u64());
  }
  CHECK(all_equal);
  CHECK(any_differ);

  CHECK(derive_seed(7, RngStream::acoustic_noise, 0) !=
        derive_seed(7, RngStream::accel_noise, 0));
  CHECK(derive_seed(7, RngStream::acoustic_noise, 0) !=
        derive_seed(7, RngStream::acoustic_noise, 1));
  CHECK(derive_seed(7, RngStream::acoustic_noise, 0) ==
        derive_seed(7, RngStream::acoustic_noise, 0));

  Rng g(42);
  double sum = 0.0, sum2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = g.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double z = g.gaussian();
    sum += z;
    sum2 += z * z;
  }
  const double mean = sum / n;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::sqrt(sum2 / n - mean * mean) == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("fnv1a64 matches the published constants") {
  CHECK(fnv1a64("") == 14695981039346656037ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("ab") != fnv1a64("ba"));
}

TEST_CASE("scenario parser reads fields and derives the region") {
  const std::string text =
      "[world]\n"
      "speed_of_sound_mps = 343\n"
      "noise_floor_dbfs = -50\n"
      "[anchor]\n"
      "id = left\n"
      "x_m = -2\n"
      "y_m = 1\n"
      "freq_hz = 18000\n"
      "[anchor]\n"
      "id = right\n"
      "x_m = 5\n"
      "y_m = 1.5\n"
      "height_m = 2\n"
      "freq_hz = 19000\n"
      "[motion]\n"
      "pattern = circle\n"
      "senses = acw, cw\n"
      "amplitude_m = 0.08\n";
  const Scenario sc = parse_scenario(text, "inline");
  CHECK(sc.world.speed_of_sound_mps == 343.0);
  CHECK(sc.world.noise_floor_dbfs == -50.0);
  CHECK(sc.world.audio_rate_hz == 44100.0);
  REQUIRE(sc.anchors.size() == 2);
  CHECK(sc.anchors[0].id == "left");
  CHECK(sc.anchors[1].height_m == 2.0);
  CHECK(sc.motion.pattern == MotionPattern::circle);
  REQUIRE(sc.motion.senses.size() == 2);
  CHECK(sc.motion.senses[0] == TurnSense::acw);
  CHECK(sc.motion.amplitude_m == 0.08);
  // No [region] section: bounding box of the anchors plus a margin.
  CHECK(sc.region.contains({-2.0, 1.0}));
  CHECK(sc.region.contains({5.0, 1.5}));
  CHECK(sc.region.x_min_m < -2.0);
  CHECK(sc.region.x_max_m > 5.0);
  CHECK(sc.source_digest == fnv1a64(text));
}

TEST_CASE("scenario parser rejects malformed and inconsistent input") {
  auto expect_error = [](const std::string& text, const char* needle) {
    try {
      parse_scenario(text, "bad");
      FAIL_CHECK("no error for: " << needle);
    } catch (const ScenarioError& e) {
      CHECK(message_contains(e, needle));
    }
  };
  const std::string one_anchor =
      "[anchor]\nid = a\nx_m = 0\ny_m = 4\nfreq_hz = 19000\n";

  expect_error("junk\n", "expected key = value");
  expect_error("x_m = 1\n", "outside any section");
  expect_error("[world]\nwarp_speed = 9\n", "unknown field");
  expect_error("[world]\naudio_rate_hz = nope\n" + one_anchor, "not a number");
  expect_error("[wormhole]\n", "unknown section");
  expect_error("[world]\n", "no anchors");
  expect_error(one_anchor + "[anchor]\nid = a\nx_m = 3\ny_m = 0\nfreq_hz = 18000\n",
               "duplicate anchor id");
  expect_error(one_anchor + "[anchor]\nid = b\nx_m = 3\ny_m = 0\nfreq_hz = 19050\n",
               "carrier spacing");
  expect_error("[anchor]\nid = a\nx_m = 0\ny_m = 4\nfreq_hz = 30000\n",
               "outside audible-free range");
  expect_error(one_anchor + "[motion]\namplitude_m = 0.5\n", "amplitude_m");
  expect_error(one_anchor + "[motion]\npeak_speed_mps = 3\n", "peak_speed_mps");
  expect_error(one_anchor + "[motion]\npattern = walk\n", "waypoints");
  expect_error(one_anchor + "[motion]\npattern = walk\nwaypoints_m = (0 0)\n",
               "bad waypoint");
  expect_error(one_anchor + "[motion]\nsenses = cw, sideways\n", "turn sense");
  expect_error(one_anchor + "[motion]\nplane = diagonal\n", "plane");
}

TEST_CASE("bundled scenarios load") {
  const Scenario single = load_scenario(scenario_path("shake_single.ini"));
  CHECK(single.anchors.size() == 1);
  CHECK(single.motion.pattern == MotionPattern::mixed);

  const Scenario room = load_scenario(scenario_path("room_six.ini"));
  CHECK(room.anchors.size() == 6);
  CHECK(room.region.x_max_m == 31.0);

  const Scenario walk = load_scenario(scenario_path("walk_serpentine.ini"));
  CHECK(walk.motion.pattern == MotionPattern::walk);
  CHECK(walk.motion.waypoints_m.size() == 6);
  double len = 0.0;
  for (size_t i = 1; i < walk.motion.waypoints_m.size(); ++i) {
    const auto& a = walk.motion.waypoints_m[i - 1];
    const auto& b = walk.motion.waypoints_m[i];
    len += std::hypot(b[0] - a[0], b[1] - a[1]);
  }
  CHECK(len == doctest::Approx(51.0));
}

TEST_CASE("channel plan divides the band and places guarded centers") {
  const ChannelPlan plan = plan_channels(17000.0, 22050.0, 2.0, 340.0, 19000.0);
  CHECK(plan.capacity == 23);
  CHECK(plan.pass_band_hz == doctest::Approx(2.0 * 2.0 * 19000.0 / 340.0));
  CHECK(plan.guard_hz == doctest::Approx(0.1 * plan.pass_band_hz));
  REQUIRE(!plan.centers_hz.empty());
  CHECK(plan.centers_hz.front() - plan.pass_band_hz / 2.0 >=
        plan.band_low_hz - 1e-9);
  CHECK(plan.centers_hz.back() + plan.pass_band_hz / 2.0 <=
        plan.band_high_hz + 1e-9);
  for (size_t i = 1; i < plan.centers_hz.size(); ++i) {
    const double gap = plan.centers_hz[i] - plan.centers_hz[i - 1];
    CHECK(gap == doctest::Approx(plan.pass_band_hz + plan.guard_hz));
    CHECK(gap >= plan.pass_band_hz);  // pass bands never overlap
  }

  // Capacity rounds the straight division to the nearest integer.
  const double pass = doppler_pass_band_hz(17000.0, 1.0, 340.0);
  CHECK(plan_channels(17000.0, 17000.0 + 2.6 * pass, 1.0, 340.0, 17000.0)
            .capacity == 3);
  CHECK(plan_channels(17000.0, 17000.0 + 2.4 * pass, 1.0, 340.0, 17000.0)
            .capacity == 2);

  CHECK_THROWS_AS(plan_channels(18000.0, 17000.0, 2.0, 340.0, 19000.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(plan_channels(17000.0, 22050.0, 0.0, 340.0, 19000.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(plan_channels(17000.0, 17050.0, 2.0, 340.0, 19000.0),
                  std::invalid_argument);
}

TEST_CASE("point-approximation error bound behaves like a chord bound") {
  for (double range : {0.8, 2.0, 8.0, 25.0}) {
    double prev = kPi;
    for (double extent : {0.02, 0.05, 0.1, 0.3}) {
      if (extent >= range) continue;
      const AngleErrorBound b = bound_angle_error(extent, range);
      CHECK(b.angle_rad > 0.0);
      CHECK(b.angle_rad < kPi / 2.0 + 1e-12);
      // Chord displacement is never shorter than the extent and approaches
      // it as the angle shrinks.
      CHECK(b.displacement_m >= extent - 1e-12);
      CHECK(b.displacement_m <= 1.5 * extent);
      (void)prev;
    }
    // Larger range, smaller worst-case angle.
    const double near = bound_angle_error(0.1, range).angle_rad;
    const double far = bound_angle_error(0.1, range * 2.0).angle_rad;
    CHECK(far < near);
  }
  CHECK_THROWS_AS(bound_angle_error(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(bound_angle_error(0.1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(bound_angle_error(1.0, 0.5), std::invalid_argument);
}

TEST_CASE("bearing recovery from direction cosines") {
  // Oracle: the bearing measured from +y toward +x, folded onto the branch
  // the arcsin form uses.
  for (double deg = -89.5; deg < 269.5; deg += 0.5) {
    const double alpha = deg2rad(deg);
    for (double scale : {1.0, 2.7, 0.01}) {
      const double got =
          angle_from_lambda(scale * std::sin(alpha), scale * std::cos(alpha));
      const double want = wrap_bearing(std::atan2(std::sin(alpha), std::cos(alpha)));
      CHECK(angle_dist(got, want) < 1e-12);
      CHECK(got >= -kPi / 2.0 - 1e-12);
      CHECK(got < 3.0 * kPi / 2.0);
    }
  }
}

TEST_CASE("heading-relative angle complements the absolute pair") {
  for (double a = -3.0; a <= 3.0; a += 0.37) {
    for (double a0 = -3.0; a0 <= 3.0; a0 += 0.41) {
      const double r = relative_angle(a, a0);
      CHECK(r > -kPi);
      CHECK(r <= kPi + 1e-12);
      // r + a + a0 lands on pi/2 modulo a full turn.
      const double closure = wrap_pi(r + a + a0 - kPi / 2.0);
      CHECK(std::abs(closure) < 1e-12);
    }
  }
}

TEST_CASE("four-leg shift model round trips through the scan solver") {
  const auto legs = leg_shifts(deg2rad(30.0), 1.0, 19000.0, 340.0);
  CHECK(legs[0] == doctest::Approx(27.94).epsilon(0.001));
  CHECK(legs[1] == doctest::Approx(48.39).epsilon(0.001));
  CHECK(legs[2] == doctest::Approx(-legs[0]));
  CHECK(legs[3] == doctest::Approx(-legs[1]));

  const std::array<double, 4> speeds{1.1, 0.9, 1.3, 1.0};
  for (double deg = -175.0; deg <= 180.0; deg += 7.0) {
    const double alpha = deg2rad(deg);
    std::array<double, 4> shifts{};
    const auto unit = leg_shifts(alpha, 1.0, 19000.0, 340.0);
    for (int i = 0; i < 4; ++i) shifts[i] = unit[i] * speeds[i];
    const double got = direction_from_legs(shifts, speeds, 19000.0, 340.0);
    CHECK(angle_dist(got, alpha) < 1e-9);
  }

  CHECK_THROWS_AS(direction_from_legs({10.0, 5.0, 10.0, -5.0},
                                      {1.0, 1.0, 1.0, 1.0}, 19000.0, 340.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(direction_from_legs({0.0, 0.0, 0.0, 0.0},
                                      {1.0, 1.0, 1.0, 1.0}, 19000.0, 340.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(direction_from_legs({1.0, 2.0, -1.0, -2.0},
                                      {1.0, 0.0, 1.0, 1.0}, 19000.0, 340.0),
                  std::invalid_argument);
}

TEST_CASE("full 3-D direction solve recovers the unit vector") {
  Rng rng(99);
  const Vector3d u = Vector3d(0.3, -0.8, 0.52).normalized();
  std::vector<Vector3d> vel;
  std::vector<double> f;
  for (int i = 0; i < 40; ++i) {
    const Vector3d v(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    vel.push_back(v);
    f.push_back(19000.0 / 340.0 * u.dot(v));
  }
  const Vector3d got = direction_3d(vel, f, 19000.0, 340.0);
  CHECK((got - u).norm() < 1e-9);

  // Planar motion leaves one axis unobservable; the error names it.
  std::vector<Vector3d> flat;
  std::vector<double> ff;
  for (int i = 0; i < 20; ++i) {
    const Vector3d v(rng.uniform(-2, 2), rng.uniform(-2, 2), 0.0);
    flat.push_back(v);
    ff.push_back(19000.0 / 340.0 * u.dot(v));
  }
  try {
    direction_3d(flat, ff, 19000.0, 340.0);
    FAIL_CHECK("planar velocities accepted");
  } catch (const std::runtime_error& e) {
    CHECK(message_contains(e, "no z extent"));
  }
  CHECK_THROWS_AS(direction_3d({vel[0]}, {f[0]}, 19000.0, 340.0),
                  std::invalid_argument);
}

TEST_CASE("band-pass design meets its stop attenuation, measured") {
  FilterSpec spec;  // defaults: 19 kHz center, 224 Hz pass, 170 Hz transition
  const FirFilter f = design_bandpass(spec);
  REQUIRE(f.h.size() % 2 == 1);
  CHECK(f.group_delay() == static_cast<int>(f.h.size() - 1) / 2);
  for (size_t i = 0; i < f.h.size() / 2; ++i)
    CHECK(f.h[i] == doctest::Approx(f.h[f.h.size() - 1 - i]).epsilon(1e-12));
  CHECK(f.ripple > 0.0);
  CHECK(f.ripple < dbfs_to_amplitude(-spec.stop_atten_db));

  const double lo = spec.center_hz - spec.pass_band_hz / 2.0;
  const double hi = spec.center_hz + spec.pass_band_hz / 2.0;
  for (double fr : {lo, spec.center_hz, hi}) {
    const double mag = filter_mag(f.h, fr, spec.rate_hz);
    CHECK(std::abs(amplitude_to_dbfs(mag)) < 0.1);
  }
  const double t = spec.transition_hz;
  for (double fr : {lo - t, lo - 2 * t, hi + t, hi + 2 * t, 1000.0, 15000.0,
                    21000.0, 22000.0}) {
    const double mag = filter_mag(f.h, fr, spec.rate_hz);
    CHECK(amplitude_to_dbfs(mag) < -spec.stop_atten_db + 0.1);
  }

  FilterSpec bad = spec;
  bad.center_hz = 22000.0;  // upper stop edge beyond Nyquist
  CHECK_THROWS_AS(design_bandpass(bad), std::invalid_argument);

  const FirFilter& c1 = cached_bandpass(spec);
  const FirFilter& c2 = cached_bandpass(spec);
  CHECK(&c1 == &c2);
}

TEST_CASE("filtered tone comes back aligned and at unit gain") {
  // The applier shifts by the group delay, so a pass-band tone reproduces
  // the input in the steady-state interior.
  const PcmStream in = tone(19000.0, 0.5, 1.0);
  const FirFilter f = design_bandpass(FilterSpec{});
  const PcmStream out = apply_filter(in, f);
  REQUIRE(out.samples.size() == in.samples.size());
  const size_t guard = f.h.size();
  double err2 = 0.0;
  size_t n = 0;
  for (size_t k = guard; k + guard < in.samples.size(); ++k) {
    const double d = out.samples[k] - in.samples[k];
    err2 += d * d;
    ++n;
  }
  CHECK(std::sqrt(err2 / n) < 5e-3);
}

TEST_CASE("gain normalization reaches unit carrier amplitude") {
  for (double amp : {0.01, 0.1, 0.5}) {
    const PcmStream in = tone(19000.0, amp, 0.5);
    const AgcResult r = normalize_amplitude(in);
    REQUIRE(r.out.samples.size() == in.samples.size());
    REQUIRE(r.gain.size() == in.samples.size());
    CHECK(!r.gain_clipped);
    double sum2 = 0.0;
    size_t n = 0;
    for (size_t k = 4000; k < r.out.samples.size(); ++k) {
      sum2 += r.out.samples[k] * r.out.samples[k];
      ++n;
    }
    CHECK(std::sqrt(2.0 * sum2 / n) == doctest::Approx(1.0).epsilon(0.03));
  }

  // Collapsed input pins the gain at the ceiling.
  PcmStream silent;
  silent.samples.assign(2000, 0.0);
  const AgcResult r = normalize_amplitude(silent);
  CHECK(r.gain_clipped);
  CHECK(r.gain.back() == doctest::Approx(AgcConfig{}.max_gain));

  // The historical divide-by-seven variant agrees at the default window.
  const PcmStream in = tone(19000.0, 0.2, 0.5);
  AgcConfig legacy;
  legacy.legacy_seventh = true;
  const AgcResult a = normalize_amplitude(in);
  const AgcResult b = normalize_amplitude(in, legacy);
  double num = 0.0, den = 0.0;
  for (size_t k = 4000; k < a.out.samples.size(); ++k) {
    num += std::abs(a.out.samples[k] - b.out.samples[k]);
    den += std::abs(a.out.samples[k]);
  }
  CHECK(num / den < 2e-3);
}

TEST_CASE("radix-2 transform matches a naive DFT and inverts") {
  std::vector<std::complex<double>> x(64);
  Rng rng(5);
  for (auto& v : x) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  const std::vector<std::complex<double>> orig = x;

  std::vector<std::complex<double>> naive(x.size());
  for (size_t k = 0; k < x.size(); ++k) {
    std::complex<double> acc{0.0, 0.0};
    for (size_t j = 0; j < x.size(); ++j)
      acc += orig[j] * std::polar(1.0, -2.0 * kPi * double(k * j) / x.size());
    naive[k] = acc;
  }
  fft_radix2(x);
  for (size_t k = 0; k < x.size(); ++k) CHECK(std::abs(x[k] - naive[k]) < 1e-9);
  fft_radix2(x, true);
  for (size_t k = 0; k < x.size(); ++k) CHECK(std::abs(x[k] - orig[k]) < 1e-12);

  std::vector<std::complex<double>> odd(12);
  CHECK_THROWS_AS(fft_radix2(odd), std::invalid_argument);
}

TEST_CASE("spectral baseline reads a steady offset at bin-limited resolution") {
  const double offset = 17.3;
  const PcmStream in = tone(19000.0 + offset, 0.8, 1.5);
  const SpectralTrack tr = fft_baseline(in, 19000.0);
  CHECK(tr.resolution_hz == doctest::Approx(44100.0 / 8192.0));
  REQUIRE(tr.t.size() > 10);
  CHECK(tr.freq_at(0.7) == doctest::Approx(19000.0 + offset).epsilon(2.5e-5));

  // Constant positive shift integrates to a positive displacement ramp.
  const std::vector<double> s = integrate_shift(tr, 19000.0, 340.0);
  REQUIRE(s.size() == tr.t.size());
  const double span_s = tr.t.back() - tr.t.front();
  const double want = 340.0 * offset / 19000.0 * span_s;
  CHECK(s.back() - s.front() == doctest::Approx(want).epsilon(0.03));
}

TEST_CASE("opening angle folds bearings into (0, pi)") {
  for (double a = -3.0; a <= 3.0; a += 0.61) {
    CHECK(opening_angle(a, a + kPi / 3.0) == doctest::Approx(kPi / 3.0));
    CHECK(opening_angle(a + kPi / 3.0, a) == doctest::Approx(kPi / 3.0));
    CHECK(opening_angle(a, a + 1.5 * kPi) == doctest::Approx(0.5 * kPi));
  }
}

TEST_CASE("arc circles agree with the subtended-angle brute force") {
  // Chords of several lengths and orientations across all quadrants,
  // openings from nearly flat to nearly closed, both sides.
  const std::vector<double> openings_deg{5,  20, 45,  60,  89.9, 90,
                                         91, 120, 135, 160, 175};
  int checked = 0;
  for (double rot_deg = 0.0; rot_deg < 360.0; rot_deg += 30.0) {
    const double rot = deg2rad(rot_deg);
    const Vector2d mid(3.0 * std::cos(rot + 0.7), -2.0 * std::sin(rot));
    const Vector2d half(2.1 * std::cos(rot), 2.1 * std::sin(rot));
    const Vector2d a = mid - half, b = mid + half;
    const double d = (b - a).norm();
    for (double deg : openings_deg) {
      const double open = deg2rad(deg);
      for (int side : {1, -1}) {
        const Circle c = circle_from_pair(a, b, open, side);
        CHECK(c.radius == doctest::Approx(d / (2.0 * std::sin(open))).epsilon(1e-12));
        // Both chord endpoints lie on the circle.
        CHECK((a - c.center).norm() == doctest::Approx(c.radius).epsilon(1e-12));
        CHECK((b - c.center).norm() == doctest::Approx(c.radius).epsilon(1e-12));
        for (int k = 0; k < 64; ++k) {
          const double th = 2.0 * kPi * k / 64.0;
          const Vector2d p = c.center + c.radius * Vector2d(std::cos(th),
                                                            std::sin(th));
          const double cr = cross2(b - a, p - a);
          if (std::abs(cr) < 1e-3 * d) continue;  // too near the chord line
          const double seen = subtended(p, a, b);
          if (cr * side > 0.0)
            CHECK(std::abs(seen - open) < 1e-9);
          else
            CHECK(std::abs(seen - (kPi - open)) < 1e-9);
          ++checked;
        }
      }
    }
  }
  CHECK(checked > 10000);

  CHECK_THROWS_AS(circle_from_pair({0, 0}, {1, 0}, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(circle_from_pair({0, 0}, {1, 0}, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(circle_from_pair({0, 0}, {1, 0}, kPi, 1), std::invalid_argument);
  CHECK_THROWS_AS(circle_from_pair({1, 1}, {1, 1}, 1.0, 1), std::invalid_argument);
}

TEST_CASE("arc distance matches dense sampling of the valid arc") {
  const Vector2d a(-2.0, 0.5), b(3.0, -1.0);
  Rng rng(17);
  for (double deg : {40.0, 90.0, 140.0}) {
    const double open = deg2rad(deg);
    for (int trial = 0; trial < 60; ++trial) {
      const Vector2d p(rng.uniform(-8, 8), rng.uniform(-8, 8));
      const double got = arc_distance(p, a, b, open);

      const int side = cross2(b - a, p - a) >= 0.0 ? 1 : -1;
      const Circle c = circle_from_pair(a, b, open, side);
      double best = 1e300;
      const int n = 100000;
      for (int k = 0; k <= n; ++k) {
        const double th = 2.0 * kPi * k / n;
        const Vector2d q = c.center + c.radius * Vector2d(std::cos(th),
                                                          std::sin(th));
        if (cross2(b - a, q - a) * side < 0.0) continue;
        best = std::min(best, (p - q).norm());
      }
      CHECK(got == doctest::Approx(best).epsilon(1e-4));
    }
  }
}

TEST_CASE("bearing pairs become arcs, degenerate pairs are dropped") {
  std::vector<AnchorNode> anchors(3);
  anchors[0].x_m = 0.0;
  anchors[0].y_m = 0.0;
  anchors[1].x_m = 4.0;
  anchors[1].y_m = 0.0;
  anchors[2].x_m = 0.0;
  anchors[2].y_m = 3.0;

  const std::vector<double> good{0.1, 1.2, 2.4};
  CHECK(arcs_from_bearings(anchors, good).size() == 3);

  // Two equal bearings: that pair constrains nothing.
  const std::vector<double> collinear{0.5, 0.5, 2.0};
  CHECK(arcs_from_bearings(anchors, collinear).size() == 2);

  // Opposite bearings degenerate the same way.
  const std::vector<double> opposite{0.5, 0.5 + kPi, 2.0};
  CHECK(arcs_from_bearings(anchors, opposite).size() == 2);

  CHECK_THROWS_AS(arcs_from_bearings(anchors, {0.1, 0.2}),
                  std::invalid_argument);
}

TEST_CASE("initial fix lands on the phone for exact bearings") {
  const Scenario room = load_scenario(scenario_path("room_six.ini"));
  for (const Vector2d spot : {Vector2d(10.0, -5.0), Vector2d(20.0, -2.0),
                              Vector2d(6.5, -3.5)}) {
    std::vector<double> bearings;
    for (const AnchorNode& a : room.anchors)
      bearings.push_back(std::atan2(a.y_m - spot.y(), a.x_m - spot.x()));
    const auto arcs = arcs_from_bearings(room.anchors, bearings);
    REQUIRE(arcs.size() >= 10);
    const InitialFix fix = locate_initial(arcs, room.region);
    CHECK((fix.position - spot).norm() < 0.02);
    CHECK(fix.pairs_used == static_cast<int>(arcs.size()));
    CHECK(fix.residuals.size() == arcs.size());
    CHECK(fix.objective < 0.05);
  }

  CHECK_THROWS_AS(locate_initial({}, room.region), std::invalid_argument);
}

TEST_CASE("step tracker follows exact phase advances") {
  const Scenario room = load_scenario(scenario_path("room_six.ini"));
  const double v = room.world.speed_of_sound_mps;
  const double step_s = 0.25;
  const Vector2d start(15.0, -6.0);
  const Vector2d vel(0.0, 1.2);

  auto range3 = [&](const AnchorNode& a, const Vector2d& p) {
    const double dz = a.height_m;  // phone plane z = 0
    return std::sqrt((p.x() - a.x_m) * (p.x() - a.x_m) +
                     (p.y() - a.y_m) * (p.y() - a.y_m) + dz * dz);
  };

  StepTracker tracker(room.anchors, v, 0.0, start, step_s);
  Vector2d truth = start;
  for (int k = 1; k <= 10; ++k) {
    const Vector2d next = start + vel * (step_s * k);
    std::vector<StepObservation> obs;
    for (size_t i = 0; i < room.anchors.size(); ++i) {
      StepObservation o;
      o.anchor_index = static_cast<int>(i);
      const double dL = range3(room.anchors[i], next) -
                        range3(room.anchors[i], truth);
      o.delta_phi_rad = -2.0 * kPi * room.anchors[i].freq_hz * dL / v;
      obs.push_back(o);
    }
    const TrackFix fix = tracker.step(obs);
    truth = next;
    CHECK(fix.t_s == doctest::Approx(step_s * k));
    CHECK(fix.n_locked == 6);
    CHECK(!fix.dead_reckoned);
    CHECK((fix.position - truth).norm() < 0.005);
  }

  // One locked anchor cannot fix a point: the tracker holds and widens.
  std::vector<StepObservation> starved(1);
  starved[0].anchor_index = 2;
  starved[0].delta_phi_rad = 0.0;
  const Vector2d held = tracker.position();
  const TrackFix dead = tracker.step(starved);
  CHECK(dead.dead_reckoned);
  CHECK(dead.n_locked == 1);
  CHECK((dead.position - held).norm() == 0.0);

  CHECK_THROWS_AS(StepTracker({}, v, 0.0, start), std::invalid_argument);
}

TEST_CASE("error summary uses nearest-rank percentiles over magnitudes") {
  std::vector<double> e{-3.0, 1.0, 2.0};
  const ErrorStats st = summarize_abs_errors(e);
  CHECK(st.n == 3);
  CHECK(e == std::vector<double>{1.0, 2.0, 3.0});
  CHECK(st.mean == doctest::Approx(2.0));
  CHECK(st.stddev == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(st.p50 == 2.0);
  CHECK(st.p90 == 3.0);
  CHECK(st.p100 == 3.0);

  std::vector<double> ten;
  for (int i = 1; i <= 10; ++i) ten.push_back(i);
  const ErrorStats st10 = summarize_abs_errors(ten);
  CHECK(st10.p50 == 5.0);
  CHECK(st10.p90 == 9.0);
  CHECK(st10.p95 == 10.0);

  std::vector<double> none;
  CHECK(summarize_abs_errors(none).n == 0);
}
