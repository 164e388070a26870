#include "doploc/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "doploc/acoustic.hpp"
#include "doploc/agc.hpp"
#include "doploc/csv_io.hpp"
#include "doploc/geometry.hpp"
#include "doploc/rng.hpp"
#include "doploc/spectrum.hpp"
#include "doploc/trajectory.hpp"

namespace doploc {
namespace {

double interp_at(const std::vector<double>& t, const std::vector<double>& y,
                 double at) {
  if (y.empty()) return 0.0;
  if (at <= t.front()) return y.front();
  if (at >= t.back()) return y.back();
  const auto it = std::upper_bound(t.begin(), t.end(), at);
  const size_t i = static_cast<size_t>(it - t.begin());
  const double f = (at - t[i - 1]) / (t[i] - t[i - 1]);
  return y[i - 1] * (1.0 - f) + y[i] * f;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// One digest over the scenario text digest plus every knob that shapes the
// run, so the manifest pins the whole configuration.
std::uint64_t digest_of(const Scenario& sc, const std::string& extras) {
  return fnv1a64(sc.source_digest + "|" + extras);
}

std::string profile_tag(const NoiseProfile& p) {
  std::ostringstream os;
  os << p.name << "|" << format_number(p.snr_db) << "|"
     << format_number(p.accel_noise_std) << "|"
     << format_number(p.accel_bias_max) << "|"
     << format_number(p.gyro_noise_std);
  return os.str();
}

void add_white_noise(PcmStream& s, double rms, std::uint64_t seed) {
  if (rms <= 0.0) return;
  Rng rng(seed);
  for (double& x : s.samples) x += rms * rng.gaussian();
  s.clipped = 0;
  for (double x : s.samples)
    if (x > 1.0 || x < -1.0) ++s.clipped;
}

constexpr MotionPattern kPatternCycle[4] = {
    MotionPattern::mixed, MotionPattern::circle, MotionPattern::rectangle,
    MotionPattern::arbitrary};

}  // namespace

ErrorStats summarize_abs_errors(std::vector<double>& errors) {
  for (double& e : errors) e = std::abs(e);
  std::sort(errors.begin(), errors.end());
  ErrorStats st;
  st.n = static_cast<int>(errors.size());
  if (st.n == 0) return st;
  double sum = 0.0, sum2 = 0.0;
  for (double e : errors) {
    sum += e;
    sum2 += e * e;
  }
  st.mean = sum / st.n;
  st.stddev = std::sqrt(std::max(0.0, sum2 / st.n - st.mean * st.mean));
  auto rank = [&](double q) {
    const int i = static_cast<int>(std::ceil(q * st.n)) - 1;
    return errors[std::clamp(i, 0, st.n - 1)];
  };
  st.p50 = rank(0.50);
  st.p90 = rank(0.90);
  st.p95 = rank(0.95);
  st.p100 = errors.back();
  return st;
}

NoiseProfile NoiseProfile::noiseless() {
  NoiseProfile p;
  p.name = "noiseless";
  p.snr_db = std::numeric_limits<double>::infinity();
  return p;
}

NoiseProfile NoiseProfile::indoor() {
  NoiseProfile p;
  p.name = "indoor";
  p.snr_db = 30.0;
  p.accel_noise_std = 0.02;
  p.accel_bias_max = 0.05;
  p.gyro_noise_std = 0.002;
  return p;
}

void emit_report(const ExperimentReport& report, const std::string& out_dir) {
  {
    CsvWriter w(out_dir + "/" + report.id + "_errors.csv");
    w.header("index,abs_error");
    for (size_t i = 0; i < report.abs_errors.size(); ++i)
      w.row({format_number(static_cast<double>(i)),
             format_number(report.abs_errors[i])});
  }
  std::ofstream out(out_dir + "/" + report.id + "_summary.txt",
                    std::ios::binary);
  if (!out)
    throw std::runtime_error("emit_report: cannot open summary for " +
                             report.id);
  const ErrorStats& st = report.stats;
  out << "id " << report.id << "\n";
  out << "seed " << report.seed << "\n";
  out << "config_digest " << hex64(report.config_digest) << "\n";
  out << "trials " << st.n + report.failed_trials << "\n";
  out << "failed " << report.failed_trials << "\n";
  out << "mean " << format_number(st.mean) << "\n";
  out << "stddev " << format_number(st.stddev) << "\n";
  out << "p50 " << format_number(st.p50) << "\n";
  out << "p90 " << format_number(st.p90) << "\n";
  out << "p95 " << format_number(st.p95) << "\n";
  out << "p100 " << format_number(st.p100) << "\n";
  for (const std::string& n : report.notes) out << "note " << n << "\n";
}

ShakeWindow detect_shake_window(const ImuStream& imu, double rest_lead_s) {
  const size_t n = imu.samples.size();
  if (n == 0) throw std::invalid_argument("detect_shake_window: empty stream");

  // Reference reading from the rest lead; deviation from it is linear in the
  // shake acceleration regardless of the shake plane, where |accel| - g
  // would suppress horizontal motion quadratically. A constant bias sits in
  // the reference too, so it cancels. The stencil margin matches the
  // forward-difference convention of the synthesized stream.
  const double t0 = imu.samples.front().t;
  const double rest_end = t0 + rest_lead_s - 1.5 * imu.dt();
  Vector3d rest = Vector3d::Zero();
  size_t n_rest = 0;
  while (n_rest < n && imu.samples[n_rest].t < rest_end)
    rest += imu.samples[n_rest++].accel;
  if (n_rest < 4)
    throw std::invalid_argument("detect_shake_window: rest lead too short");
  rest /= static_cast<double>(n_rest);

  std::vector<double> dev(n);
  for (size_t k = 0; k < n; ++k)
    dev[k] = (imu.samples[k].accel - rest).norm();

  // Moving average over ~0.1 s knocks down per-sample noise without
  // blurring the session edges by more than the margin trimmed below.
  const long half = std::max<long>(1, std::lround(0.05 * imu.rate_hz));
  std::vector<double> smooth(n);
  double acc = 0.0;
  long lo = 0, hi = -1;
  for (size_t k = 0; k < n; ++k) {
    const long want_lo = static_cast<long>(k) - half;
    const long want_hi = std::min<long>(static_cast<long>(n) - 1,
                                        static_cast<long>(k) + half);
    while (hi < want_hi) acc += dev[++hi];
    while (lo < want_lo) acc -= dev[lo++];
    smooth[k] = acc / static_cast<double>(hi - lo + 1);
  }

  const double peak = *std::max_element(smooth.begin(), smooth.end());
  const double thresh = std::max(0.5, 0.12 * peak);
  size_t first = n, last = 0;
  for (size_t k = 0; k < n; ++k) {
    if (smooth[k] > thresh) {
      if (first == n) first = k;
      last = k;
    }
  }
  if (first >= last)
    throw std::runtime_error(
        "detect_shake_window: no motion above the energy threshold");
  const double margin = 0.12;
  ShakeWindow w;
  w.begin_s = imu.samples[first].t + margin;
  w.end_s = imu.samples[last].t - margin;
  if (w.end_s - w.begin_s < 0.5)
    throw std::runtime_error("detect_shake_window: session shorter than 0.5 s");
  return w;
}

double noise_floor_for_snr(const Scenario& scenario, const Vector3d& phone_p,
                           double snr_db) {
  if (!std::isfinite(snr_db))
    return -std::numeric_limits<double>::infinity();
  if (scenario.anchors.empty())
    throw std::invalid_argument("noise_floor_for_snr: no anchors");

  // Received carrier amplitude per anchor, omnidirectional reference.
  struct Ref {
    double amp;
    double freq;
  };
  std::vector<Ref> refs;
  for (const AnchorNode& a : scenario.anchors) {
    const double L = (a.position() - phone_p).norm();
    refs.push_back({dbfs_to_amplitude(a.level_dbfs_at_1m) / std::max(L, 0.1),
                    a.freq_hz});
  }
  std::sort(refs.begin(), refs.end(),
            [](const Ref& a, const Ref& b) { return a.amp < b.amp; });
  const Ref mid = refs[refs.size() / 2];

  // White noise spreads its power evenly to Nyquist; only the pass band
  // competes with the tone, so scale the floor by the in-band fraction.
  const double pass = doppler_pass_band_hz(
      mid.freq, scenario.world.max_phone_speed_mps,
      scenario.world.speed_of_sound_mps);
  const double snr_lin = std::pow(10.0, snr_db / 10.0);
  const double sigma2 = (mid.amp * mid.amp / 2.0) *
                        (scenario.world.audio_rate_hz / 2.0) /
                        (pass * snr_lin);
  return amplitude_to_dbfs(std::sqrt(sigma2));
}

const FirFilter& cached_bandpass(const FilterSpec& spec) {
  static std::mutex mu;
  static std::map<std::string, FirFilter> cache;
  std::ostringstream key;
  key << format_number(spec.rate_hz) << "|" << format_number(spec.center_hz)
      << "|" << format_number(spec.pass_band_hz) << "|"
      << format_number(spec.transition_hz) << "|"
      << format_number(spec.stop_atten_db) << "|" << spec.taps;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key.str());
  if (it == cache.end())
    it = cache.emplace(key.str(), design_bandpass(spec)).first;
  return it->second;
}

ShakeTrialOutcome run_shake_trial(const Scenario& scenario,
                                  const NoiseProfile& noise,
                                  std::uint64_t seed, std::uint64_t trial,
                                  const ShakeTrialOptions& opt) {
  ShakeTrialOutcome out;
  try {
    if (scenario.anchors.empty())
      throw std::invalid_argument("run_shake_trial: scenario has no anchors");

    Scenario sc = scenario;
    MotionSpec& motion = sc.motion;
    Rng geom(derive_seed(seed, RngStream::trial_geometry, trial));

    AnchorNode anchor = sc.anchors.front();
    double bearing;
    if (opt.range_m > 0.0) {
      bearing = geom.uniform(-kPi, kPi);
      anchor.x_m = motion.start_m[0] + opt.range_m * std::cos(bearing);
      anchor.y_m = motion.start_m[1] + opt.range_m * std::sin(bearing);
      sc.anchors.assign(1, anchor);
    } else {
      bearing = std::atan2(anchor.y_m - motion.start_m[1],
                           anchor.x_m - motion.start_m[0]);
    }
    out.anchor_id = anchor.id;

    if (opt.cycle_patterns) motion.pattern = kPatternCycle[trial % 4];
    if (opt.randomize_phone_yaw) {
      motion.phone_yaw_rad = geom.uniform(-kPi, kPi);
      if (!std::isfinite(opt.plane_yaw_offset_rad))
        motion.plane_yaw_rad = geom.uniform(-kPi, kPi);
    }
    if (std::isfinite(opt.plane_yaw_offset_rad))
      motion.plane_yaw_rad = bearing + opt.plane_yaw_offset_rad;
    motion.shape_seed = derive_seed(seed, RngStream::pattern_shape, trial);

    WorldConfig world = sc.world;
    world.noise_floor_dbfs = noise_floor_for_snr(
        sc, Vector3d(motion.start_m[0], motion.start_m[1], motion.start_m[2]),
        noise.snr_db);

    const Trajectory traj = gen_trajectory(motion, world);
    const PcmStream pcm = synthesize_channel(
        traj, anchor, world, derive_seed(seed, RngStream::acoustic_noise, trial));
    const PhaseOracle oracle = phase_oracle(traj, anchor, world);

    Vector3d bias = Vector3d::Zero();
    if (noise.accel_bias_max > 0.0) {
      Rng br(derive_seed(seed, RngStream::accel_bias, trial));
      for (int i = 0; i < 3; ++i)
        bias[i] = br.uniform(-noise.accel_bias_max, noise.accel_bias_max);
    }
    const ImuStream imu = synthesize_imu(
        traj, bias, noise.accel_noise_std, noise.gyro_noise_std,
        derive_seed(seed, RngStream::accel_noise, trial));
    const FrameEstimate frame = estimate_wcs_frame(imu, motion.rest_lead_s);
    const ShakeWindow window = detect_shake_window(imu, motion.rest_lead_s);
    out.window_begin_s = window.begin_s;
    out.window_end_s = window.end_s;

    FilterSpec fspec;
    fspec.rate_hz = world.audio_rate_hz;
    fspec.center_hz = anchor.freq_hz;
    fspec.pass_band_hz =
        std::max(224.0, doppler_pass_band_hz(anchor.freq_hz,
                                             world.max_phone_speed_mps,
                                             world.speed_of_sound_mps));
    const PcmStream filtered = apply_filter(pcm, cached_bandpass(fspec));
    const AgcResult agc = normalize_amplitude(filtered);

    PllConfig pll;
    pll.carrier_hz = anchor.freq_hz;
    pll.rate_hz = world.audio_rate_hz;
    const PhaseTrack track = track_phase(agc.out, pll, opt.duty);
    const Kinematics kin =
        phase_to_kinematics(track, world.speed_of_sound_mps);

    const MotionIntegrals integrals =
        integrate_motion(imu, frame, window.begin_s, window.end_s);
    const size_t rows = integrals.t.size();
    std::vector<double> t_s(rows), f_hz(rows);
    for (size_t i = 0; i < rows; ++i) {
      t_s[i] = integrals.t_begin + integrals.t[i] + integrals.align_offset_s;
      f_hz[i] = kin.freq_shift_at(t_s[i]);
    }
    out.n_rows = static_cast<int>(rows);

    out.fit = fit_direction(integrals, t_s, f_hz, anchor.freq_hz,
                            world.speed_of_sound_mps,
                            frame.alpha0(frame.init_end_index));

    // Truth: direction from the shake centroid, expressed in the estimated
    // frame, whose X axis is the device x bearing at initialisation.
    Vector3d centroid = Vector3d::Zero();
    size_t n_c = 0;
    for (const TrajectorySample& s : traj.imu) {
      if (s.t < window.begin_s || s.t > window.end_s) continue;
      centroid += s.p;
      ++n_c;
    }
    if (n_c == 0) throw std::runtime_error("run_shake_trial: empty window");
    centroid /= static_cast<double>(n_c);
    const Vector3d d = anchor.position() - centroid;
    out.range_m = d.norm();
    const double alpha_true_est = angle_from_lambda(d.x(), d.y()) -
                                  motion.phone_yaw_rad;
    out.alpha_err_deg =
        rad2deg(angle_dist(out.fit.alpha_rad, alpha_true_est));
    out.alpha_r_deg = rad2deg(out.fit.alpha_rel_rad);
    out.alpha_r_true_deg = rad2deg(wrap_pi(kPi / 2.0 - alpha_true_est));

    // Displacement and shift fidelity over the session window, both tracks
    // rebased where the window opens.
    std::vector<double> s_or(oracle.t.size());
    for (size_t k = 0; k < oracle.t.size(); ++k)
      s_or[k] = oracle.phi_true[k] * world.speed_of_sound_mps /
                (2.0 * kPi * anchor.freq_hz);
    double se_s = 0.0, se_f = 0.0;
    const double est0 = kin.displacement_at(window.begin_s);
    const double or0 = interp_at(oracle.t, s_or, window.begin_s);
    for (size_t i = 0; i < rows; ++i) {
      const double t = t_s[i];
      const double es = (kin.displacement_at(t) - est0) -
                        (interp_at(oracle.t, s_or, t) - or0);
      const double ef = f_hz[i] - interp_at(oracle.t, oracle.f_shift_true, t);
      se_s += es * es;
      se_f += ef * ef;
    }
    out.s_rmse_m = std::sqrt(se_s / rows);
    out.f_rmse_hz = std::sqrt(se_f / rows);

    double lock_acc = 0.0;
    size_t lock_n = 0;
    for (size_t k = 0; k < track.lock.size(); ++k) {
      const double t = track.t(k);
      if (t < window.begin_s || t > window.end_s) continue;
      lock_acc += track.lock[k];
      ++lock_n;
    }
    out.lock_mean = lock_n ? lock_acc / lock_n : 0.0;

    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.fft_s_rmse_m = nan;
    out.fft_f_rmse_hz = nan;
    out.fft_resolution_hz = nan;
    if (opt.with_fft_baseline) {
      const SpectralTrack spect = fft_baseline(agc.out, anchor.freq_hz);
      out.fft_resolution_hz = spect.resolution_hz;
      const std::vector<double> s_fft =
          integrate_shift(spect, anchor.freq_hz, world.speed_of_sound_mps);
      const double fft0 = interp_at(spect.t, s_fft, window.begin_s);
      double se_fs = 0.0, se_ff = 0.0;
      for (size_t i = 0; i < rows; ++i) {
        const double t = t_s[i];
        const double es = (interp_at(spect.t, s_fft, t) - fft0) -
                          (interp_at(oracle.t, s_or, t) - or0);
        const double ef = (spect.freq_at(t) - anchor.freq_hz) -
                          interp_at(oracle.t, oracle.f_shift_true, t);
        se_fs += es * es;
        se_ff += ef * ef;
      }
      out.fft_s_rmse_m = std::sqrt(se_fs / rows);
      out.fft_f_rmse_hz = std::sqrt(se_ff / rows);
    }

    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

DirectionExperiment run_direction_experiment(const Scenario& scenario,
                                             int trials,
                                             const NoiseProfile& noise,
                                             std::uint64_t seed,
                                             const DirectionRunOptions& opt) {
  DirectionExperiment exp;
  exp.trials.resize(std::max(trials, 0));
  run_indexed(trials, [&](int i) {
    ShakeTrialOptions topt = opt.trial;
    if (!opt.range_sweep_m.empty())
      topt.range_m = opt.range_sweep_m[i % opt.range_sweep_m.size()];
    topt.cycle_patterns = opt.cycle_patterns || topt.cycle_patterns;
    topt.with_fft_baseline = opt.with_fft_baseline || topt.with_fft_baseline;
    exp.trials[i] = run_shake_trial(scenario, noise, seed, i, topt);
  });

  ExperimentReport& rep = exp.report;
  rep.id = "direction_" + noise.name;
  rep.seed = seed;
  {
    std::ostringstream extras;
    extras << profile_tag(noise) << "|trials=" << trials << "|sweep=";
    for (double r : opt.range_sweep_m) extras << format_number(r) << ",";
    extras << "|cycle=" << opt.cycle_patterns;
    rep.config_digest = digest_of(scenario, extras.str());
  }
  for (int i = 0; i < trials; ++i) {
    const ShakeTrialOutcome& t = exp.trials[i];
    if (t.ok) {
      rep.abs_errors.push_back(t.alpha_err_deg);
    } else {
      ++rep.failed_trials;
      std::ostringstream os;
      os << "trial " << i << ": " << t.error;
      rep.notes.push_back(os.str());
    }
  }
  rep.stats = summarize_abs_errors(rep.abs_errors);

  if (!opt.out_dir.empty()) {
    write_direction_csv(opt.out_dir + "/direction_results.csv", exp.trials);
    emit_report(rep, opt.out_dir);
  }
  return exp;
}

LocalizationExperiment run_localization_experiment(
    const Scenario& scenario, const std::vector<Vector2d>& spots,
    int trials_per_spot, std::uint64_t seed,
    const LocalizationRunOptions& opt) {
  if (scenario.anchors.size() < 3)
    throw std::invalid_argument(
        "run_localization_experiment: needs at least three anchors");
  if (spots.empty())
    throw std::invalid_argument("run_localization_experiment: no spots");

  const int n = static_cast<int>(spots.size()) * std::max(trials_per_spot, 0);
  LocalizationExperiment exp;
  exp.fixes.resize(n);
  std::vector<double> errs(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> failures(n);
  const double sigma = deg2rad(opt.angle_noise_deg);

  run_indexed(n, [&](int c) {
    const Vector2d& spot = spots[c / std::max(trials_per_spot, 1)];
    try {
      Rng rng(derive_seed(seed, RngStream::angle_noise, c));
      std::vector<double> bearings(scenario.anchors.size());
      for (size_t i = 0; i < scenario.anchors.size(); ++i) {
        const AnchorNode& a = scenario.anchors[i];
        bearings[i] = std::atan2(a.y_m - spot.y(), a.x_m - spot.x()) +
                      sigma * rng.gaussian();
      }
      const std::vector<ArcConstraint> arcs =
          arcs_from_bearings(scenario.anchors, bearings);
      exp.fixes[c] = locate_initial(arcs, scenario.region);
      errs[c] = (exp.fixes[c].position - spot).norm();
    } catch (const std::exception& e) {
      failures[c] = e.what();
    }
  });

  ExperimentReport& rep = exp.report;
  rep.id = "localize";
  rep.seed = seed;
  {
    std::ostringstream extras;
    extras << "sigma_deg=" << format_number(opt.angle_noise_deg)
           << "|per_spot=" << trials_per_spot << "|spots=";
    for (const Vector2d& s : spots)
      extras << format_number(s.x()) << ":" << format_number(s.y()) << ",";
    rep.config_digest = digest_of(scenario, extras.str());
  }
  for (int c = 0; c < n; ++c) {
    if (!failures[c].empty()) {
      ++rep.failed_trials;
      std::ostringstream os;
      os << "trial " << c << ": " << failures[c];
      rep.notes.push_back(os.str());
      continue;
    }
    rep.abs_errors.push_back(errs[c]);
    if (exp.fixes[c].ambiguous || exp.fixes[c].near_concyclic)
      ++exp.flagged_trials;
  }
  rep.stats = summarize_abs_errors(rep.abs_errors);
  if (exp.flagged_trials > 0) {
    std::ostringstream os;
    os << exp.flagged_trials << " trials flagged ambiguous or near-concyclic";
    rep.notes.push_back(os.str());
  }

  if (!opt.out_dir.empty()) {
    CsvWriter w(opt.out_dir + "/locate_results.csv");
    w.header(
        "spot_x,spot_y,trial,x,y,objective,pairs_used,ambiguous,"
        "near_concyclic,error_m");
    for (int c = 0; c < n; ++c) {
      if (!failures[c].empty()) continue;
      const Vector2d& spot = spots[c / std::max(trials_per_spot, 1)];
      const InitialFix& f = exp.fixes[c];
      w.row({format_number(spot.x()), format_number(spot.y()),
             format_number(c % std::max(trials_per_spot, 1)),
             format_number(f.position.x()), format_number(f.position.y()),
             format_number(f.objective),
             format_number(static_cast<double>(f.pairs_used)),
             f.ambiguous ? "1" : "0", f.near_concyclic ? "1" : "0",
             format_number(errs[c])});
    }
    emit_report(rep, opt.out_dir);
  }
  return exp;
}

TrackingExperiment run_tracking_experiment(const Scenario& scenario,
                                           const TrackingRunOptions& opt,
                                           std::uint64_t seed) {
  if (scenario.motion.pattern != MotionPattern::walk)
    throw std::invalid_argument(
        "run_tracking_experiment: scenario motion must be a walk");
  if (scenario.anchors.size() < 2)
    throw std::invalid_argument(
        "run_tracking_experiment: needs at least two anchors");

  WorldConfig world = scenario.world;
  const MotionSpec& motion = scenario.motion;
  const Vector3d start(motion.start_m[0], motion.start_m[1], motion.start_m[2]);
  world.noise_floor_dbfs = noise_floor_for_snr(scenario, start,
                                               opt.noise.snr_db);

  const Trajectory traj = gen_trajectory(motion, world);

  // Channels are synthesized clean and mixed; the receiver noise is one
  // shared background, not one draw per anchor.
  WorldConfig quiet = world;
  quiet.noise_floor_dbfs = -std::numeric_limits<double>::infinity();
  PcmStream received;
  {
    std::vector<PcmStream> parts;
    parts.reserve(scenario.anchors.size());
    for (const AnchorNode& a : scenario.anchors)
      parts.push_back(synthesize_channel(traj, a, quiet, 0));
    std::vector<const PcmStream*> ptrs;
    for (const PcmStream& p : parts) ptrs.push_back(&p);
    received = mix(ptrs);
  }
  if (std::isfinite(world.noise_floor_dbfs))
    add_white_noise(received, dbfs_to_amplitude(world.noise_floor_dbfs),
                    derive_seed(seed, RngStream::acoustic_noise, 0));

  // Per-anchor phase tracks, duty-cycled the same way.
  const DutyCycle duty{opt.step_s, opt.duty_fraction};
  const size_t n_anchors = scenario.anchors.size();
  std::vector<PhaseTrack> tracks(n_anchors);
  run_indexed(static_cast<int>(n_anchors), [&](int i) {
    const AnchorNode& a = scenario.anchors[i];
    FilterSpec fspec;
    fspec.rate_hz = world.audio_rate_hz;
    fspec.center_hz = a.freq_hz;
    fspec.pass_band_hz =
        std::max(224.0, doppler_pass_band_hz(a.freq_hz,
                                             world.max_phone_speed_mps,
                                             world.speed_of_sound_mps));
    const PcmStream filtered = apply_filter(received, cached_bandpass(fspec));
    const AgcResult agc = normalize_amplitude(filtered);
    PllConfig pll;
    pll.carrier_hz = a.freq_hz;
    pll.rate_hz = world.audio_rate_hz;
    tracks[i] = track_phase(agc.out, pll, duty);
  });

  // Initial fix: the true start, optionally pushed off by the configured
  // error along a seeded direction.
  Vector2d p0(start.x(), start.y());
  if (opt.initial_error_m > 0.0) {
    Rng rng(derive_seed(seed, RngStream::initial_error, 0));
    const double ang = rng.uniform(-kPi, kPi);
    p0 += opt.initial_error_m * Vector2d(std::cos(ang), std::sin(ang));
  }

  StepTracker tracker(scenario.anchors, world.speed_of_sound_mps, start.z(),
                      p0, opt.step_s);

  TrackingExperiment exp;
  const double duration = traj.duration_s();
  const long k0 = std::lround(std::ceil(motion.rest_lead_s / opt.step_s));
  const auto sample_at = [&](double t) {
    return std::clamp<long>(std::lround(t * world.audio_rate_hz), 0,
                            static_cast<long>(received.samples.size()) - 1);
  };
  for (long k = k0;; ++k) {
    const double t_a = k * opt.step_s;
    const double t_b = t_a + opt.step_s;
    if (t_b > duration) break;
    std::vector<StepObservation> obs;
    for (size_t i = 0; i < n_anchors; ++i) {
      const PhaseTrack& tr = tracks[i];
      const long ka = sample_at(t_a), kb = sample_at(t_b);
      StepObservation o;
      o.anchor_index = static_cast<int>(i);
      o.delta_phi_rad = tr.phi[kb] - tr.phi[ka];
      double lock_acc = 0.0;
      long lock_n = 0;
      for (long s = ka; s <= kb; ++s) {
        if (!tr.observed[s]) continue;
        lock_acc += tr.lock[s];
        ++lock_n;
      }
      const double lock = lock_n ? lock_acc / lock_n : tr.lock[kb];
      o.locked = lock >= opt.lock_threshold;
      obs.push_back(o);
    }
    TrackFix fix = tracker.step(obs);
    fix.t_s = t_b;
    if (fix.dead_reckoned) ++exp.lock_loss_frames;
    const Vector3d truth = trajectory_position(traj, t_b);
    exp.error_m.push_back((fix.position - Vector2d(truth.x(), truth.y())).norm());
    exp.fixes.push_back(fix);
  }

  ExperimentReport& rep = exp.report;
  rep.id = "track";
  rep.seed = seed;
  {
    std::ostringstream extras;
    extras << profile_tag(opt.noise)
           << "|duty=" << format_number(opt.duty_fraction)
           << "|init_err=" << format_number(opt.initial_error_m)
           << "|step=" << format_number(opt.step_s);
    rep.config_digest = digest_of(scenario, extras.str());
  }
  rep.abs_errors = exp.error_m;
  rep.stats = summarize_abs_errors(rep.abs_errors);
  if (exp.lock_loss_frames > 0) {
    std::ostringstream os;
    os << "lock lost in " << exp.lock_loss_frames << " of "
       << exp.fixes.size() << " frames";
    rep.notes.push_back(os.str());
  }

  if (!opt.out_dir.empty()) {
    write_fix_csv(opt.out_dir + "/track_fixes.csv", exp.fixes);
    emit_report(rep, opt.out_dir);
  }
  return exp;
}

void write_phase_track_csv(const std::string& path,
                           const std::string& anchor_id,
                           const PhaseTrack& track, const Kinematics& kin,
                           double speed_of_sound, int stride) {
  if (stride < 1) throw std::invalid_argument("track csv: stride must be >= 1");
  CsvWriter w(path);
  w.header("t,anchor_id,theta,f_shift,v_rel,s_rel,lock_quality");
  const double to_speed = speed_of_sound / track.carrier_hz;
  for (size_t k = 0; k < track.phi.size(); k += stride) {
    const double f = kin.freq_shift_hz[k];
    w.row({format_number(track.t(k)), anchor_id, format_number(track.theta[k]),
           format_number(f), format_number(to_speed * f),
           format_number(kin.displacement_m[k]),
           format_number(track.lock[k])});
  }
}

void write_direction_csv(const std::string& path,
                         const std::vector<ShakeTrialOutcome>& trials) {
  CsvWriter w(path);
  w.header(
      "trial,anchor_id,lambda_x,lambda_y,lambda_0,lambda_1,alpha_deg,"
      "alpha_r_deg,residual_hz,n,s_rmse_m,fft_s_rmse_m,fft_f_rmse_hz,"
      "fft_resolution_hz");
  for (size_t i = 0; i < trials.size(); ++i) {
    const ShakeTrialOutcome& t = trials[i];
    if (!t.ok) continue;
    w.row({format_number(static_cast<double>(i)), t.anchor_id,
           format_number(t.fit.lambda(0)), format_number(t.fit.lambda(1)),
           format_number(t.fit.lambda(2)), format_number(t.fit.lambda(3)),
           format_number(rad2deg(t.fit.alpha_rad)),
           format_number(rad2deg(t.fit.alpha_rel_rad)),
           format_number(t.fit.residual_rms_hz),
           format_number(static_cast<double>(t.n_rows)),
           format_number(t.s_rmse_m), format_number(t.fft_s_rmse_m),
           format_number(t.fft_f_rmse_hz),
           format_number(t.fft_resolution_hz)});
  }
}

void write_fix_csv(const std::string& path,
                   const std::vector<TrackFix>& fixes) {
  CsvWriter w(path);
  w.header("t,x,y,objective,n_locked");
  for (const TrackFix& f : fixes)
    w.row({format_number(f.t_s), format_number(f.position.x()),
           format_number(f.position.y()), format_number(f.objective),
           format_number(static_cast<double>(f.n_locked))});
}

void run_indexed(int n, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const unsigned hw = std::thread::hardware_concurrency();
  const int workers =
      std::clamp<int>(static_cast<int>(hw ? hw : 1), 1, std::min(n, 16));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto work = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace doploc
