#pragma once

#include <cstdint>
#include <vector>

#include "doploc/acoustic.hpp"

namespace doploc {

// Software phase-locked loop tuned to one anchor tone. The loop variable
// theta tracks the negated signal phase; the corrected estimate subtracts
// the steady tracking lag read back from the smoothed error signal.
struct PllConfig {
  double carrier_hz = 19000.0;
  double rate_hz = 44100.0;
  double mu = 0.03;           // update weight; one step never exceeds mu/2
  double loop_lpf_hz = 500.0; // pole of the error low-pass inside the loop
  double corr_lpf_hz = 250.0; // extra pole on the lag-correction readback
  double lock_lpf_hz = 20.0;  // pole of the lock-quality error power average
};

class PllTracker {
 public:
  explicit PllTracker(const PllConfig& cfg);

  // Consumes one gain-normalized sample and returns the corrected phase
  // estimate, unwrapped and relative to the nominal carrier.
  double process(double sample);

  // Advances through an unobserved stretch assuming the given frequency
  // offset holds; phase continues linearly so the next burst locks fast.
  void skip(double duration_s, double freq_offset_hz);

  double theta() const { return theta_; }
  double corrected_phase() const;
  // 1 near perfect lock, approaching 0 when the error power saturates.
  double lock_quality() const;

 private:
  PllConfig cfg_;
  double w0_;            // carrier advance per sample, rad
  double carrier_phase_; // wrapped accumulator for the reference oscillator
  double theta_;         // unwrapped loop phase
  double err_lp_;        // loop-filtered error
  double err_corr_;      // further-smoothed error for the lag readback
  double err_pow_;       // smoothed squared error for lock quality
  double a_loop_, a_corr_, a_lock_;
};

// Duty cycling: the leading `fraction` of every frame is processed, the
// remainder is skipped with the frequency estimated from the burst tail.
struct DutyCycle {
  double frame_s = 0.25;
  double fraction = 1.0;
};

struct PhaseTrack {
  double rate_hz = 0.0;
  double carrier_hz = 0.0;
  std::vector<double> phi;       // corrected phase per sample, unwrapped
  std::vector<double> theta;     // raw loop phase, before lag correction
  std::vector<float> lock;       // lock quality per sample
  std::vector<uint8_t> observed; // 1 when the sample was actually processed
  double t(size_t k) const { return static_cast<double>(k) / rate_hz; }
};

// Tracks the whole stream; `in` must already be band-limited and
// gain-normalized. Gap samples carry extrapolated phase and observed=0.
PhaseTrack track_phase(const PcmStream& in, const PllConfig& cfg,
                       const DutyCycle& duty = {});

// Kinematic readout of a phase track: radial displacement (positive toward
// the anchor) and the Doppler shift from a centered least-squares slope.
struct Kinematics {
  double rate_hz = 0.0;
  std::vector<double> displacement_m;
  std::vector<double> freq_shift_hz;
  double displacement_at(double t_s) const;
  double freq_shift_at(double t_s) const;
};

Kinematics phase_to_kinematics(const PhaseTrack& track, double speed_of_sound,
                               int slope_window = 441);

}  // namespace doploc
