// doploc command line. Scenario-driven synthesis, the estimation
// experiments, and band planning behind one config/seed/out-dir contract.
// Every artifact-producing run drops a manifest.txt naming the config
// digest and seed, so any output can be regenerated exactly.
//
// Exit codes: 0 success, 2 bad usage, 3 rejected scenario config,
// 4 pipeline or I/O failure.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "doploc/acoustic.hpp"
#include "doploc/agc.hpp"
#include "doploc/experiment.hpp"
#include "doploc/fir.hpp"
#include "doploc/imu.hpp"
#include "doploc/localization.hpp"
#include "doploc/pll.hpp"
#include "doploc/rng.hpp"
#include "doploc/scenario.hpp"
#include "doploc/trajectory.hpp"

namespace {

using namespace doploc;

constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitRuntime = 4;

struct CommonArgs {
  std::string config;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  int trials = 0;  // 0 = per-command default
  double duty = 1.0;
  std::string profile;  // empty = per-command default
};

// "scenario" keeps the acoustic floor from the config file and leaves the
// inertial stream clean; the named presets override the floor.
NoiseProfile profile_by_name(const std::string& name) {
  if (name == "noiseless") return NoiseProfile::noiseless();
  if (name == "indoor") return NoiseProfile::indoor();
  NoiseProfile p;
  p.name = "scenario";
  p.snr_db = std::numeric_limits<double>::quiet_NaN();
  return p;
}

double scenario_floor_dbfs(const Scenario& sc, const NoiseProfile& noise) {
  if (noise.name == "scenario") return sc.world.noise_floor_dbfs;
  if (!std::isfinite(noise.snr_db))
    return -std::numeric_limits<double>::infinity();
  const Vector3d start{sc.motion.start_m[0], sc.motion.start_m[1],
                       sc.motion.start_m[2]};
  return noise_floor_for_snr(sc, start, noise.snr_db);
}

void write_manifest(
    const std::string& out_dir, const std::string& command,
    const Scenario& sc, const CommonArgs& c,
    const std::vector<std::pair<std::string, std::string>>& extras) {
  std::ofstream f(out_dir + "/manifest.txt", std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + out_dir + "/manifest.txt");
  f << "tool=doploc " << DOPLOC_VERSION << "\n"
    << "command=" << command << "\n"
    << "config=" << c.config << "\n"
    << "config_digest=" << sc.source_digest << "\n"
    << "seed=" << c.seed << "\n";
  for (const auto& [k, v] : extras) f << k << "=" << v << "\n";
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}

void print_stats(const std::string& label, const ErrorStats& st,
                 const std::string& unit) {
  std::cout << label << ": n=" << st.n << "  mean=" << fmt(st.mean) << unit
            << "  p50=" << fmt(st.p50) << unit << "  p90=" << fmt(st.p90)
            << unit << "  p95=" << fmt(st.p95) << unit
            << "  max=" << fmt(st.p100) << unit << "\n";
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(std::stod(item));
  }
  return out;
}

// "x,y; x,y; ..." pairs.
std::vector<Vector2d> parse_spots(const std::string& text) {
  std::vector<Vector2d> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    const auto xy = parse_number_list(item);
    if (xy.size() != 2)
      throw CLI::ValidationError("--spots", "each spot needs exactly x,y");
    out.push_back({xy[0], xy[1]});
  }
  return out;
}

// Evaluation grid inside the search region, kept off the boundary.
std::vector<Vector2d> default_spots(const SearchRegion& r) {
  const double margin = 1.5, step = 3.0;
  std::vector<Vector2d> spots;
  for (double y = r.y_min_m + margin; y <= r.y_max_m - margin + 1e-9; y += step)
    for (double x = r.x_min_m + margin; x <= r.x_max_m - margin + 1e-9;
         x += step)
      spots.push_back({x, y});
  return spots;
}

int cmd_plan_channels(double low, double high, double vmax, double vsound,
                      double design) {
  const ChannelPlan plan = plan_channels(low, high, vmax, vsound, design);
  std::cout << "band " << fmt(plan.band_low_hz, 1) << " .. "
            << fmt(plan.band_high_hz, 1) << " Hz\n"
            << "pass band " << fmt(plan.pass_band_hz, 1) << " Hz per carrier ("
            << fmt(vmax, 2) << " m/s at " << fmt(design, 0) << " Hz)\n"
            << "capacity " << plan.capacity << " channels\n"
            << "placed " << plan.centers_hz.size() << " centers, guard "
            << fmt(plan.guard_hz, 1) << " Hz:\n";
  for (double f : plan.centers_hz) std::cout << "  " << fmt(f, 1) << "\n";
  return 0;
}

// Full receive-chain dump for one session: mixed waveform, ground truth,
// inertial stream, and the per-anchor phase tracks.
int cmd_synth(const CommonArgs& c, int stride) {
  Scenario sc = load_scenario(c.config);
  const NoiseProfile noise =
      profile_by_name(c.profile.empty() ? "scenario" : c.profile);
  const double floor_dbfs = scenario_floor_dbfs(sc, noise);
  std::filesystem::create_directories(c.out_dir);

  const Trajectory traj = gen_trajectory(sc.motion, sc.world);
  traj.write_csv(c.out_dir + "/trajectory.csv");

  WorldConfig quiet = sc.world;
  quiet.noise_floor_dbfs = -std::numeric_limits<double>::infinity();
  std::vector<PcmStream> channels;
  channels.reserve(sc.anchors.size());
  for (const auto& a : sc.anchors)
    channels.push_back(synthesize_channel(traj, a, quiet, 0));
  std::vector<const PcmStream*> parts;
  for (const auto& ch : channels) parts.push_back(&ch);
  PcmStream received = mix(parts);
  if (std::isfinite(floor_dbfs)) {
    Rng rng(derive_seed(c.seed, RngStream::acoustic_noise, 0));
    const double rms = std::pow(10.0, floor_dbfs / 20.0);
    for (double& s : received.samples) s += rms * rng.gaussian();
  }
  const int clipped = write_wav(c.out_dir + "/received.wav", received);

  Vector3d bias = Vector3d::Zero();
  if (noise.accel_bias_max > 0.0) {
    Rng br(derive_seed(c.seed, RngStream::accel_bias, 0));
    for (int i = 0; i < 3; ++i)
      bias[i] = br.uniform(-noise.accel_bias_max, noise.accel_bias_max);
  }
  const ImuStream imu =
      synthesize_imu(traj, bias, noise.accel_noise_std, noise.gyro_noise_std,
                     derive_seed(c.seed, RngStream::accel_noise, 0));
  imu.write_csv(c.out_dir + "/imu.csv");

  for (const auto& a : sc.anchors) {
    phase_oracle(traj, a, sc.world)
        .write_csv(c.out_dir + "/oracle_" + a.id + ".csv");

    FilterSpec fspec;
    fspec.rate_hz = sc.world.audio_rate_hz;
    fspec.center_hz = a.freq_hz;
    fspec.pass_band_hz = std::max(
        224.0, doppler_pass_band_hz(a.freq_hz, sc.world.max_phone_speed_mps,
                                    sc.world.speed_of_sound_mps));
    const PcmStream filtered = apply_filter(received, cached_bandpass(fspec));
    const AgcResult agc = normalize_amplitude(filtered);
    PllConfig pll;
    pll.carrier_hz = a.freq_hz;
    pll.rate_hz = sc.world.audio_rate_hz;
    const PhaseTrack track =
        track_phase(agc.out, pll, DutyCycle{0.25, c.duty});
    const Kinematics kin =
        phase_to_kinematics(track, sc.world.speed_of_sound_mps);
    write_phase_track_csv(c.out_dir + "/phase_" + a.id + ".csv", a.id, track,
                          kin, sc.world.speed_of_sound_mps, stride);
  }

  write_manifest(c.out_dir, "synth", sc, c,
                 {{"profile", noise.name},
                  {"noise_floor_dbfs", fmt(floor_dbfs, 2)},
                  {"duty", fmt(c.duty, 2)},
                  {"stride", std::to_string(stride)}});
  std::cout << sc.anchors.size() << " channels, "
            << fmt(received.duration_s(), 2) << " s, " << clipped
            << " clipped samples -> " << c.out_dir << "\n";
  return 0;
}

int cmd_direction(const CommonArgs& c, const std::string& sweep_text,
                  bool fixed_pattern, bool fft) {
  const Scenario sc = load_scenario(c.config);
  const NoiseProfile noise =
      profile_by_name(c.profile.empty() ? "indoor" : c.profile);
  if (noise.name == "scenario")
    throw CLI::ValidationError("--profile",
                               "direction needs noiseless or indoor");
  std::filesystem::create_directories(c.out_dir);

  DirectionRunOptions opt;
  opt.range_sweep_m = parse_number_list(sweep_text);
  opt.cycle_patterns = !fixed_pattern;
  opt.with_fft_baseline = fft;
  opt.trial.duty = DutyCycle{0.25, c.duty};
  opt.out_dir = c.out_dir;
  const int trials = c.trials > 0 ? c.trials : 50;
  const DirectionExperiment ex =
      run_direction_experiment(sc, trials, noise, c.seed, opt);

  write_manifest(c.out_dir, "direction", sc, c,
                 {{"profile", noise.name},
                  {"trials", std::to_string(trials)},
                  {"range_sweep", sweep_text.empty() ? "-" : sweep_text},
                  {"duty", fmt(c.duty, 2)}});
  print_stats(ex.report.id, ex.report.stats, " deg");
  if (fft) {
    double ps = 0, fs = 0, ff = 0, res = 0;
    int n = 0;
    for (const ShakeTrialOutcome& t : ex.trials) {
      if (!t.ok || !std::isfinite(t.fft_s_rmse_m)) continue;
      ps += t.s_rmse_m;
      fs += t.fft_s_rmse_m;
      ff += t.fft_f_rmse_hz;
      res += t.fft_resolution_hz;
      ++n;
    }
    if (n > 0)
      std::cout << "baseline: phase s_rmse " << fmt(ps / n * 1e3, 3)
                << " mm vs spectrogram " << fmt(fs / n * 1e3, 1)
                << " mm (f_rmse " << fmt(ff / n, 2) << " Hz, bin "
                << fmt(res / n, 2) << " Hz, " << n << " trials)\n";
  }
  if (ex.report.failed_trials > 0)
    std::cout << ex.report.failed_trials << " failed trials, see "
              << ex.report.id << "_summary.txt\n";
  return 0;
}

int cmd_localize(const CommonArgs& c, const std::string& spots_text,
                 double sigma_deg) {
  const Scenario sc = load_scenario(c.config);
  std::filesystem::create_directories(c.out_dir);
  const std::vector<Vector2d> spots =
      spots_text.empty() ? default_spots(sc.region) : parse_spots(spots_text);
  if (spots.empty())
    throw CLI::ValidationError("--spots", "no evaluation spots");

  LocalizationRunOptions opt;
  opt.angle_noise_deg = sigma_deg;
  opt.out_dir = c.out_dir;
  const int trials = c.trials > 0 ? c.trials : 30;
  const LocalizationExperiment ex =
      run_localization_experiment(sc, spots, trials, c.seed, opt);

  write_manifest(c.out_dir, "localize", sc, c,
                 {{"spots", std::to_string(spots.size())},
                  {"trials_per_spot", std::to_string(trials)},
                  {"angle_noise_deg", fmt(sigma_deg, 2)}});
  print_stats(ex.report.id, ex.report.stats, " m");
  std::cout << ex.flagged_trials << " flagged (ambiguous or near-concyclic)\n";
  return 0;
}

int cmd_track(const CommonArgs& c, double init_error, double step_s,
              double lock_threshold) {
  const Scenario sc = load_scenario(c.config);
  const NoiseProfile noise =
      profile_by_name(c.profile.empty() ? "indoor" : c.profile);
  if (noise.name == "scenario")
    throw CLI::ValidationError("--profile", "track needs noiseless or indoor");
  std::filesystem::create_directories(c.out_dir);

  TrackingRunOptions opt;
  opt.duty_fraction = c.duty;
  opt.initial_error_m = init_error;
  opt.noise = noise;
  opt.step_s = step_s;
  opt.lock_threshold = lock_threshold;
  opt.out_dir = c.out_dir;
  const TrackingExperiment ex = run_tracking_experiment(sc, opt, c.seed);

  write_manifest(c.out_dir, "track", sc, c,
                 {{"profile", noise.name},
                  {"duty", fmt(c.duty, 2)},
                  {"initial_error_m", fmt(init_error, 2)},
                  {"step_s", fmt(step_s, 2)}});
  print_stats(ex.report.id, ex.report.stats, " m");
  std::cout << ex.fixes.size() << " fixes, " << ex.lock_loss_frames
            << " dead-reckoned frames, final error "
            << fmt(ex.error_m.empty() ? 0.0 : ex.error_m.back()) << " m\n";
  return 0;
}

// Battery matched to the scenario kind: walks get tracked at full and 20%
// duty, shakes get both direction profiles plus (with enough anchors) the
// static solver.
int cmd_eval(const CommonArgs& c) {
  const Scenario sc = load_scenario(c.config);
  std::filesystem::create_directories(c.out_dir);

  if (sc.motion.pattern == MotionPattern::walk) {
    for (double duty : {1.0, 0.2}) {
      TrackingRunOptions opt;
      opt.duty_fraction = duty;
      opt.out_dir = c.out_dir + "/track_duty" + std::to_string(int(duty * 100));
      std::filesystem::create_directories(opt.out_dir);
      const TrackingExperiment ex = run_tracking_experiment(sc, opt, c.seed);
      print_stats("track duty " + fmt(duty, 2), ex.report.stats, " m");
    }
  } else {
    const int trials = c.trials > 0 ? c.trials : 50;
    for (const char* name : {"noiseless", "indoor"}) {
      DirectionRunOptions opt;
      opt.cycle_patterns = true;
      opt.out_dir = c.out_dir + "/direction_" + name;
      std::filesystem::create_directories(opt.out_dir);
      const DirectionExperiment ex = run_direction_experiment(
          sc, trials, profile_by_name(name), c.seed, opt);
      print_stats(ex.report.id, ex.report.stats, " deg");
    }
    if (sc.anchors.size() >= 3) {
      LocalizationRunOptions opt;
      opt.angle_noise_deg = 2.66;
      opt.out_dir = c.out_dir + "/localize";
      std::filesystem::create_directories(opt.out_dir);
      const LocalizationExperiment ex = run_localization_experiment(
          sc, default_spots(sc.region), c.trials > 0 ? c.trials : 30, c.seed,
          opt);
      print_stats(ex.report.id, ex.report.stats, " m");
    }
  }
  write_manifest(c.out_dir, "eval", sc, c, {});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doppler-tone direction finding and localization toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("doploc ") + DOPLOC_VERSION);

  CommonArgs c;
  app.add_option("--config", c.config, "Scenario config file");
  app.add_option("--seed", c.seed, "Master seed")->capture_default_str();
  app.add_option("--out-dir", c.out_dir, "Artifact directory")
      ->capture_default_str();
  app.add_option("--trials", c.trials, "Trial count (0 = command default)");
  app.add_option("--duty", c.duty,
                 "Processed fraction of each 0.25 s frame")
      ->check(CLI::Range(0.02, 1.0))
      ->capture_default_str();
  app.add_option("--profile", c.profile,
                 "Noise profile: noiseless, indoor, scenario")
      ->check(CLI::IsMember({"noiseless", "indoor", "scenario"}));

  auto* synth = app.add_subcommand(
      "synth", "Render one session: waveform, truth, inertial, phase tracks");
  int stride = 16;
  synth->add_option("--stride", stride, "Keep every Nth phase-track row")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  auto* direction = app.add_subcommand(
      "direction", "Repeated shake trials, bearing error report");
  std::string sweep_text;
  bool fixed_pattern = false, fft = false;
  direction->add_option("--range-sweep", sweep_text,
                        "Anchor ranges in m, comma-separated, cycled");
  direction->add_flag("--fixed-pattern", fixed_pattern,
                      "Keep the scenario pattern instead of cycling");
  direction->add_flag("--fft-baseline", fft,
                      "Also score the spectral tracker");

  auto* localize = app.add_subcommand(
      "localize", "Static position fixes from noisy bearings");
  std::string spots_text;
  double sigma_deg = 2.66;
  localize->add_option("--spots", spots_text,
                       "Evaluation spots \"x,y; x,y; ...\" (default: grid)");
  localize->add_option("--sigma-deg", sigma_deg, "Bearing noise std, degrees")
      ->capture_default_str();

  auto* track = app.add_subcommand(
      "track", "Walk a path, step-tracked fixes and error stream");
  double init_error = 0.0, step_s = 0.25, lock_threshold = 0.05;
  track->add_option("--init-error", init_error,
                    "Initial fix offset in m")
      ->capture_default_str();
  track->add_option("--step", step_s, "Tracker frame length in s")
      ->capture_default_str();
  track->add_option("--lock-threshold", lock_threshold,
                    "Minimum mean lock quality per frame")
      ->capture_default_str();

  app.add_subcommand("eval", "Scenario-matched battery of the above");

  auto* plan = app.add_subcommand(
      "plan-channels", "How many anchors fit in a band");
  double low = 17000.0, high = 22050.0, vmax = 2.0, vsound = 340.0,
         design = 19000.0;
  plan->add_option("--low", low, "Band lower edge, Hz")->capture_default_str();
  plan->add_option("--high", high, "Band upper edge, Hz")
      ->capture_default_str();
  plan->add_option("--max-speed", vmax, "Design phone speed, m/s")
      ->capture_default_str();
  plan->add_option("--speed-of-sound", vsound, "m/s")->capture_default_str();
  plan->add_option("--design", design, "Carrier used to size the pass band")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  for (auto* sub : {synth, direction, localize, track}) sub->fallthrough();
  app.get_subcommand("eval")->fallthrough();
  plan->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  const bool needs_config = !app.got_subcommand(plan);
  if (needs_config && c.config.empty()) {
    std::cerr << "error: --config is required for this command\n";
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(plan))
      return cmd_plan_channels(low, high, vmax, vsound, design);
    if (app.got_subcommand(synth)) return cmd_synth(c, stride);
    if (app.got_subcommand(direction))
      return cmd_direction(c, sweep_text, fixed_pattern, fft);
    if (app.got_subcommand(localize))
      return cmd_localize(c, spots_text, sigma_deg);
    if (app.got_subcommand(track))
      return cmd_track(c, init_error, step_s, lock_threshold);
    return cmd_eval(c);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ScenarioError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
