#pragma once

#include <vector>

#include "doploc/acoustic.hpp"

namespace doploc {

// Log-domain automatic gain normalization. The gain target is unit carrier
// amplitude: a steady sine of any level comes out with amplitude 1 once the
// loop settles (a handful of samples at the default leak).
struct AgcConfig {
  int window = 11;       // trailing samples averaged per amplitude estimate
  double leak = 0.9;     // fraction of the log-gain replaced each sample
  double max_gain = 1e4; // ceiling applied when the input collapses
  // Rectifying a near-Nyquist carrier leaves a strong beat (about 6 kHz for
  // a 19 kHz tone at 44.1 kHz) that an 11-sample mean cannot average out;
  // this pole on the estimate keeps it out of the gain.
  double estimate_lpf_hz = 800.0;
  // Historical variant: the window sum is divided by 7 instead of the
  // rectified-mean scaling. For the default window the two agree to 0.04%.
  bool legacy_seventh = false;
};

struct AgcResult {
  PcmStream out;
  std::vector<double> gain;  // applied gain per sample
  bool gain_clipped = false; // ceiling was reached at least once
};

AgcResult normalize_amplitude(const PcmStream& in, const AgcConfig& cfg = {});

}  // namespace doploc
