#include "doploc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace doploc {
namespace {

constexpr double kMinCarrierHz = 17000.0;  // stays above common hearing range
// Keep the carrier plus its Doppler band and filter transition below Nyquist.
constexpr double kNyquistGuardHz = 600.0;

struct Field {
  std::string value;
  int line = 0;
  bool used = false;
};

struct Section {
  std::string name;
  int line = 0;
  std::map<std::string, Field> fields;
};

[[noreturn]] void fail(const std::string& name, int line, const std::string& msg) {
  std::ostringstream os;
  os << name << ":" << line << ": " << msg;
  throw ScenarioError(os.str());
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<Section> tokenize(const std::string& text, const std::string& name) {
  std::vector<Section> sections;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(name, line_no, "unterminated section header");
      sections.push_back({trim(line.substr(1, line.size() - 2)), line_no, {}});
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) fail(name, line_no, "expected key = value");
    if (sections.empty()) fail(name, line_no, "field outside any section");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(name, line_no, "empty field name");
    auto& fields = sections.back().fields;
    if (fields.count(key))
      fail(name, line_no, "duplicate field '" + key + "' in section");
    fields[key] = {value, line_no, false};
  }
  return sections;
}

class SectionReader {
 public:
  SectionReader(Section& s, const std::string& name) : s_(s), name_(name) {}

  bool has(const std::string& key) const { return s_.fields.count(key) > 0; }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    return number(key);
  }

  double number(const std::string& key) {
    Field& f = require(key);
    try {
      size_t pos = 0;
      double v = std::stod(f.value, &pos);
      if (pos != f.value.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      fail(name_, f.line, "field '" + key + "': not a number: '" + f.value + "'");
    }
  }

  std::uint64_t integer(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return fallback;
    Field& f = require(key);
    try {
      size_t pos = 0;
      std::uint64_t v = std::stoull(f.value, &pos);
      if (pos != f.value.size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      fail(name_, f.line, "field '" + key + "': not an integer: '" + f.value + "'");
    }
  }

  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    return require(key).value;
  }

  std::string text(const std::string& key) { return require(key).value; }

  int line(const std::string& key) { return require(key).line; }

  void reject_unknown() const {
    for (const auto& [key, f] : s_.fields)
      if (!f.used)
        fail(name_, f.line, "unknown field '" + key + "' in [" + s_.name + "]");
  }

 private:
  Field& require(const std::string& key) {
    auto it = s_.fields.find(key);
    if (it == s_.fields.end())
      fail(name_, s_.line, "section [" + s_.name + "] missing field '" + key + "'");
    it->second.used = true;
    return it->second;
  }

  Section& s_;
  const std::string& name_;
};

MotionPattern parse_pattern(const std::string& v, const std::string& name, int line) {
  if (v == "mixed") return MotionPattern::mixed;
  if (v == "circle") return MotionPattern::circle;
  if (v == "rectangle") return MotionPattern::rectangle;
  if (v == "arbitrary") return MotionPattern::arbitrary;
  if (v == "walk") return MotionPattern::walk;
  fail(name, line, "unknown motion pattern '" + v + "'");
}

std::vector<TurnSense> parse_senses(const std::string& v, const std::string& name,
                                    int line) {
  std::vector<TurnSense> out;
  std::istringstream in(v);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    tok = trim(tok);
    if (tok == "cw")
      out.push_back(TurnSense::cw);
    else if (tok == "acw")
      out.push_back(TurnSense::acw);
    else
      fail(name, line, "turn sense must be cw or acw, got '" + tok + "'");
  }
  if (out.empty()) fail(name, line, "empty turn sense list");
  return out;
}

// "(x, y); (x, y); ..." -> waypoint list.
std::vector<std::array<double, 2>> parse_waypoints(const std::string& v,
                                                   const std::string& name,
                                                   int line) {
  std::vector<std::array<double, 2>> out;
  std::istringstream in(v);
  std::string tok;
  while (std::getline(in, tok, ';')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    double x = 0, y = 0;
    char l = 0, c = 0, r = 0;
    std::istringstream p(tok);
    if (!(p >> l >> x >> c >> y >> r) || l != '(' || c != ',' || r != ')')
      fail(name, line, "bad waypoint '" + tok + "', expected (x, y)");
    out.push_back({x, y});
  }
  if (out.size() < 2) fail(name, line, "walk path needs at least two waypoints");
  return out;
}

void validate(Scenario& sc, const std::string& name) {
  const WorldConfig& w = sc.world;
  if (w.speed_of_sound_mps <= 0 || w.audio_rate_hz <= 0 || w.imu_rate_hz <= 0)
    throw ScenarioError(name + ": world rates and speed of sound must be positive");

  if (sc.anchors.empty())
    throw ScenarioError(name + ": scenario has no anchors");

  const double f_hi = w.audio_rate_hz / 2.0 - kNyquistGuardHz;
  for (const AnchorNode& a : sc.anchors) {
    if (a.freq_hz < kMinCarrierHz || a.freq_hz > f_hi) {
      std::ostringstream os;
      os << name << ": anchor '" << a.id << "': carrier " << a.freq_hz
         << " Hz outside audible-free range [" << kMinCarrierHz << ", " << f_hi
         << "]";
      throw ScenarioError(os.str());
    }
  }
  for (size_t i = 0; i < sc.anchors.size(); ++i) {
    for (size_t j = i + 1; j < sc.anchors.size(); ++j) {
      const AnchorNode& a = sc.anchors[i];
      const AnchorNode& b = sc.anchors[j];
      if (a.id == b.id)
        throw ScenarioError(name + ": duplicate anchor id '" + a.id + "'");
      const double need = doppler_pass_band_hz(std::max(a.freq_hz, b.freq_hz),
                                               w.max_phone_speed_mps,
                                               w.speed_of_sound_mps);
      const double gap = std::abs(a.freq_hz - b.freq_hz);
      if (gap < need) {
        std::ostringstream os;
        os << name << ": anchors '" << a.id << "' and '" << b.id
           << "': carrier spacing " << gap << " Hz below Doppler pass band "
           << need << " Hz";
        throw ScenarioError(os.str());
      }
    }
  }

  MotionSpec& m = sc.motion;
  if (m.pattern == MotionPattern::walk) {
    if (m.walk_speed_mps <= 0)
      throw ScenarioError(name + ": walk speed must be positive");
  } else {
    if (m.amplitude_m <= 0 || m.amplitude_m > 0.15)
      throw ScenarioError(name +
                          ": shake amplitude_m must lie in (0, 0.15]; larger "
                          "sweeps are arm motion, not a hand shake");
    if (m.peak_speed_mps <= 0 || m.peak_speed_mps > w.max_phone_speed_mps)
      throw ScenarioError(name + ": peak_speed_mps must lie in (0, max_phone_speed]");
    if (m.duration_s <= 0)
      throw ScenarioError(name + ": shake duration_s must be positive");
  }

  if (sc.region.x_max_m <= sc.region.x_min_m ||
      sc.region.y_max_m <= sc.region.y_min_m) {
    // Default: anchor bounding box inflated by a room-scale margin.
    double x0 = sc.anchors.front().x_m, x1 = x0;
    double y0 = sc.anchors.front().y_m, y1 = y0;
    for (const AnchorNode& a : sc.anchors) {
      x0 = std::min(x0, a.x_m);
      x1 = std::max(x1, a.x_m);
      y0 = std::min(y0, a.y_m);
      y1 = std::max(y1, a.y_m);
    }
    const double margin = 8.0;
    sc.region = {x0 - margin, x1 + margin, y0 - margin, y1 + margin};
  }
}

}  // namespace

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

Scenario parse_scenario(const std::string& text, const std::string& name) {
  Scenario sc;
  sc.source_digest = [&] {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(text)));
    return std::string(buf);
  }();

  std::vector<Section> sections = tokenize(text, name);
  bool saw_world = false, saw_motion = false;

  for (Section& s : sections) {
    SectionReader r(s, name);
    if (s.name == "world") {
      if (saw_world) fail(name, s.line, "duplicate [world] section");
      saw_world = true;
      sc.world.speed_of_sound_mps = r.number("speed_of_sound_mps", 340.0);
      sc.world.audio_rate_hz = r.number("audio_rate_hz", 44100.0);
      sc.world.imu_rate_hz = r.number("imu_rate_hz", 200.0);
      sc.world.noise_floor_dbfs = r.number("noise_floor_dbfs", -60.0);
      sc.world.max_phone_speed_mps = r.number("max_phone_speed_mps", 2.0);
      r.reject_unknown();
    } else if (s.name == "anchor") {
      AnchorNode a;
      a.id = r.text("id");
      a.x_m = r.number("x_m");
      a.y_m = r.number("y_m");
      a.height_m = r.number("height_m", 0.0);
      a.freq_hz = r.number("freq_hz");
      a.level_dbfs_at_1m = r.number("level_dbfs_at_1m", -20.0);
      a.azimuth_rad = r.number("azimuth_rad", 0.0);
      a.elevation_rad = r.number("elevation_rad", 0.0);
      a.directivity_exponent = r.number("directivity_exponent", 0.0);
      r.reject_unknown();
      sc.anchors.push_back(a);
    } else if (s.name == "motion") {
      if (saw_motion) fail(name, s.line, "duplicate [motion] section");
      saw_motion = true;
      MotionSpec& m = sc.motion;
      m.pattern = parse_pattern(r.text("pattern", "mixed"), name,
                                r.has("pattern") ? r.line("pattern") : s.line);
      if (r.has("senses"))
        m.senses = parse_senses(r.text("senses"), name, r.line("senses"));
      m.amplitude_m = r.number("amplitude_m", 0.10);
      m.peak_speed_mps = r.number("peak_speed_mps", 2.0);
      m.duration_s = r.number("duration_s", 4.0);
      m.rest_lead_s = r.number("rest_lead_s", 0.5);
      m.rest_tail_s = r.number("rest_tail_s", 0.25);
      const std::string plane = r.text("plane", "horizontal");
      if (plane == "horizontal")
        m.vertical_plane = false;
      else if (plane == "vertical")
        m.vertical_plane = true;
      else
        fail(name, r.line("plane"), "plane must be horizontal or vertical");
      m.plane_yaw_rad = r.number("plane_yaw_rad", 0.0);
      m.phone_yaw_rad = r.number("phone_yaw_rad", 0.0);
      m.start_m = {r.number("start_x_m", 0.0), r.number("start_y_m", 0.0),
                   r.number("start_z_m", 0.0)};
      m.shape_seed = r.integer("shape_seed", 0);
      m.walk_speed_mps = r.number("walk_speed_mps", 1.2);
      if (r.has("waypoints_m"))
        m.waypoints_m =
            parse_waypoints(r.text("waypoints_m"), name, r.line("waypoints_m"));
      if (m.pattern == MotionPattern::walk && m.waypoints_m.empty())
        fail(name, s.line, "walk pattern requires waypoints_m");
      r.reject_unknown();
    } else if (s.name == "region") {
      sc.region.x_min_m = r.number("x_min_m");
      sc.region.x_max_m = r.number("x_max_m");
      sc.region.y_min_m = r.number("y_min_m");
      sc.region.y_max_m = r.number("y_max_m");
      r.reject_unknown();
    } else {
      fail(name, s.line, "unknown section [" + s.name + "]");
    }
  }

  validate(sc, name);
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("load_scenario: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

ChannelPlan plan_channels(double band_low_hz, double band_high_hz,
                          double v_max_mps, double v_sound_mps,
                          double design_freq_hz) {
  if (band_high_hz <= band_low_hz)
    throw std::invalid_argument("plan_channels: empty band");
  if (v_max_mps <= 0 || v_sound_mps <= 0 || design_freq_hz <= 0)
    throw std::invalid_argument("plan_channels: speeds and frequency must be positive");

  ChannelPlan plan;
  plan.band_low_hz = band_low_hz;
  plan.band_high_hz = band_high_hz;
  plan.pass_band_hz = doppler_pass_band_hz(design_freq_hz, v_max_mps, v_sound_mps);
  plan.guard_hz = 0.1 * plan.pass_band_hz;

  const double width = band_high_hz - band_low_hz;
  if (width < plan.pass_band_hz) {
    std::ostringstream os;
    os << "plan_channels: band " << width << " Hz narrower than one pass band ("
       << plan.pass_band_hz << " Hz)";
    throw std::invalid_argument(os.str());
  }

  // Count by straight division of the free band, to the nearest integer.
  plan.capacity = static_cast<int>(std::llround(width / plan.pass_band_hz));

  // Concrete placements add a guard gap and never overlap, so fewer channels
  // may fit than the headline capacity.
  const double spacing = plan.pass_band_hz + plan.guard_hz;
  for (double c = band_low_hz + plan.pass_band_hz / 2.0;
       c + plan.pass_band_hz / 2.0 <= band_high_hz + 1e-9; c += spacing)
    plan.centers_hz.push_back(c);
  return plan;
}

AngleErrorBound bound_angle_error(double extent_m, double range_m) {
  if (extent_m <= 0 || range_m <= 0)
    throw std::invalid_argument("bound_angle_error: extent and range must be positive");
  if (extent_m >= range_m)
    throw std::invalid_argument(
        "bound_angle_error: shake extent reaches the anchor; the point-source "
        "approximation needs extent < range");
  AngleErrorBound b;
  b.angle_rad = std::asin(extent_m / range_m);
  b.displacement_m = 2.0 * range_m * std::sin(b.angle_rad / 2.0);
  return b;
}

}  // namespace doploc
