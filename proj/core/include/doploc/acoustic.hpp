#pragma once
// Received-signal synthesis for moving-receiver tones. Each sample is the
// carrier evaluated at emission time t - L(t)/v, so Doppler arises from the
// geometry instead of an explicit frequency ramp, plus 1/L spreading loss and
// white receiver noise. The phase oracle exposes the exact phase the DSP
// chain is trying to recover.

#include <cstdint>
#include <string>
#include <vector>

#include "doploc/scenario.hpp"
#include "doploc/trajectory.hpp"

namespace doploc {

struct PcmStream {
  double rate_hz = 44100.0;
  std::vector<double> samples;  // nominal range [-1, 1]
  // Samples outside full scale at synthesis time; they are NOT clamped here,
  // only on 16-bit export.
  int clipped = 0;

  double duration_s() const { return samples.size() / rate_hz; }
};

// Exact per-sample channel state: phase relative to t = 0, its derivative,
// and range. phi_true = -2*pi*f * (L(t) - L(0)) / v_sound, so
// displacement L(0) - L(t) equals phi_true * v_sound / (2*pi*f).
struct PhaseOracle {
  std::string anchor_id;
  double freq_hz = 0.0;
  double rate_hz = 44100.0;
  std::vector<double> t;
  std::vector<double> phi_true;      // rad, continuous (never wrapped)
  std::vector<double> f_shift_true;  // Hz
  std::vector<double> L_true;        // m

  void write_csv(const std::string& path) const;
};

PcmStream synthesize_channel(const Trajectory& traj, const AnchorNode& anchor,
                             const WorldConfig& world, std::uint64_t noise_seed);

// Pointwise sum; throws std::invalid_argument on rate or length mismatch.
PcmStream mix(const std::vector<const PcmStream*>& parts);

// Adds a second, noiseless source playing the same tone (multipath / rogue
// emitter study). volume scales the interferer's level.
void add_interferer(PcmStream& target, const Trajectory& traj,
                    const AnchorNode& interferer, const WorldConfig& world,
                    double volume);

PhaseOracle phase_oracle(const Trajectory& traj, const AnchorNode& anchor,
                         const WorldConfig& world);

// 16-bit little-endian mono WAV. Export clamps to full scale and reports how
// many samples clipped.
int write_wav(const std::string& path, const PcmStream& s);
PcmStream read_wav(const std::string& path);

}  // namespace doploc
