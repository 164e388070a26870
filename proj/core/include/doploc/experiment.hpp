#pragma once
// Experiment drivers: full synth -> DSP -> estimation loops with error
// accounting. Every run is a pure function of (config, seed); trials draw
// their randomness through counter-derived streams, so reports are
// reproducible byte for byte no matter how the worker pool schedules them.

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "doploc/direction.hpp"
#include "doploc/fir.hpp"
#include "doploc/imu.hpp"
#include "doploc/localization.hpp"
#include "doploc/pll.hpp"
#include "doploc/scenario.hpp"

namespace doploc {

struct ErrorStats {
  int n = 0;
  double mean = 0.0;
  double stddev = 0.0;
  double p50 = 0.0;
  double p90 = 0.0;
  double p95 = 0.0;
  double p100 = 0.0;
};

// Absolute values, sorted in place; percentiles by nearest rank.
ErrorStats summarize_abs_errors(std::vector<double>& errors);

struct NoiseProfile {
  std::string name = "noiseless";
  // In-band acoustic SNR at the trial geometry; infinity disables noise.
  double snr_db = 0.0;
  double accel_noise_std = 0.0;  // m/s^2
  double accel_bias_max = 0.0;   // m/s^2, per-axis uniform draw
  double gyro_noise_std = 0.0;   // rad/s

  static NoiseProfile noiseless();
  static NoiseProfile indoor();
};

struct ExperimentReport {
  std::string id;
  std::vector<double> abs_errors;  // sorted once summarized
  ErrorStats stats;
  int failed_trials = 0;
  std::vector<std::string> notes;  // per-failure text, deterministic order
  std::uint64_t config_digest = 0;
  std::uint64_t seed = 0;
};

// <id>_errors.csv plus <id>_summary.txt under out_dir. Content depends only
// on the report, never on clocks or environment.
void emit_report(const ExperimentReport& report, const std::string& out_dir);

// One shake session against a single anchor: synthesize, filter, normalize,
// track phase, integrate motion, regress direction, score against truth.
struct ShakeTrialOptions {
  // > 0 repositions the anchor at this ground range from the phone start,
  // at a bearing drawn from the trial's geometry stream.
  double range_m = 0.0;
  // Shake-plane bearing relative to the anchor bearing; NaN keeps the
  // scenario's own plane yaw. Lets a test bound the radial speed.
  double plane_yaw_offset_rad = std::numeric_limits<double>::quiet_NaN();
  bool randomize_phone_yaw = true;
  bool cycle_patterns = false;  // trial index walks the pattern list A..D
  bool with_fft_baseline = false;
  DutyCycle duty{};
};

struct ShakeTrialOutcome {
  bool ok = false;
  std::string error;
  std::string anchor_id;
  DirectionFit fit;
  int n_rows = 0;
  double range_m = 0.0;
  double window_begin_s = 0.0, window_end_s = 0.0;
  double lock_mean = 0.0;
  double alpha_r_deg = 0.0, alpha_r_true_deg = 0.0;
  double alpha_err_deg = 0.0;  // |wrapped difference|, same for alpha_r
  double s_rmse_m = 0.0;       // displacement vs oracle over the window
  double f_rmse_hz = 0.0;      // frequency shift vs oracle
  // Spectral baseline on the same filtered stream; NaN unless requested.
  double fft_s_rmse_m = 0.0;
  double fft_f_rmse_hz = 0.0;
  double fft_resolution_hz = 0.0;
};

ShakeTrialOutcome run_shake_trial(const Scenario& scenario,
                                  const NoiseProfile& noise,
                                  std::uint64_t seed, std::uint64_t trial,
                                  const ShakeTrialOptions& opt = {});

struct DirectionRunOptions {
  std::vector<double> range_sweep_m;  // cycled by trial index; empty = fixed
  bool cycle_patterns = false;
  bool with_fft_baseline = false;
  ShakeTrialOptions trial;  // range_m is overwritten by the sweep
  std::string out_dir;      // empty = no artifacts
};

struct DirectionExperiment {
  ExperimentReport report;  // abs alpha_r error per trial, degrees
  std::vector<ShakeTrialOutcome> trials;
};

DirectionExperiment run_direction_experiment(const Scenario& scenario,
                                             int trials,
                                             const NoiseProfile& noise,
                                             std::uint64_t seed,
                                             const DirectionRunOptions& opt = {});

// Static localization over repeated spots: true bearings to every anchor,
// white angular noise, pairwise arcs, grid-plus-refine solve. The acoustic
// chain is exercised by the direction and tracking experiments; this one
// isolates the geometry stage.
struct LocalizationRunOptions {
  double angle_noise_deg = 0.0;
  std::string out_dir;
};

struct LocalizationExperiment {
  ExperimentReport report;  // abs position error per trial, m
  std::vector<InitialFix> fixes;
  int flagged_trials = 0;  // ambiguous or near-concyclic results
};

LocalizationExperiment run_localization_experiment(
    const Scenario& scenario, const std::vector<Vector2d>& spots,
    int trials_per_spot, std::uint64_t seed,
    const LocalizationRunOptions& opt = {});

// Walk-and-track: per-anchor phase tracks over the whole walk, one range
// update per step frame, fix stream from the step tracker.
struct TrackingRunOptions {
  double duty_fraction = 1.0;
  double initial_error_m = 0.0;
  NoiseProfile noise = NoiseProfile::indoor();
  double step_s = 0.25;
  // Mean frame lock below this drops the anchor from the solve. Sustained
  // walking Doppler parks accurately tracking loops near 0.1, so the gate
  // sits just above the dead-loop floor rather than near full lock.
  double lock_threshold = 0.05;
  std::string out_dir;
};

struct TrackingExperiment {
  ExperimentReport report;  // abs horizontal error per fix, m
  std::vector<TrackFix> fixes;
  std::vector<double> error_m;  // aligned with fixes
  int lock_loss_frames = 0;
};

TrackingExperiment run_tracking_experiment(const Scenario& scenario,
                                           const TrackingRunOptions& opt,
                                           std::uint64_t seed);

// Shared plumbing, exposed for tests and the CLI.

// Shake session bounds from inertial energy: accel deviation from the
// rest-lead reading, smoothed, thresholded at a fraction of its peak.
struct ShakeWindow {
  double begin_s = 0.0;
  double end_s = 0.0;
};
ShakeWindow detect_shake_window(const ImuStream& imu, double rest_lead_s);

// Background level that puts the in-band SNR at snr_db for the anchor of
// median received amplitude at the given phone position.
double noise_floor_for_snr(const Scenario& scenario, const Vector3d& phone_p,
                           double snr_db);

// Process-wide design cache; equal specs share one equiripple run.
const FirFilter& cached_bandpass(const FilterSpec& spec);

// `t,anchor_id,theta,f_shift,v_rel,s_rel,lock_quality` rows, one per stride.
void write_phase_track_csv(const std::string& path,
                           const std::string& anchor_id,
                           const PhaseTrack& track, const Kinematics& kin,
                           double speed_of_sound, int stride = 1);

// `trial,anchor_id,lambda_x,lambda_y,lambda_0,lambda_1,alpha_deg,
// alpha_r_deg,residual_hz,n` rows for the successful trials.
void write_direction_csv(const std::string& path,
                         const std::vector<ShakeTrialOutcome>& trials);

// `t,x,y,objective,n_locked` rows.
void write_fix_csv(const std::string& path, const std::vector<TrackFix>& fixes);

// Runs fn(0..n-1) on a small worker pool; results must land in
// index-addressed slots so scheduling cannot reorder them.
void run_indexed(int n, const std::function<void(int)>& fn);

}  // namespace doploc
