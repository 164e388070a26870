#pragma once
// Linear-phase FIR band-pass design and application. The designer runs the
// equiripple (minimax) exchange algorithm for odd-length symmetric filters;
// the applier compensates the (taps-1)/2 group delay by index shift so
// filtered samples stay aligned with the input time base.

#include <vector>

#include "doploc/acoustic.hpp"

namespace doploc {

struct FilterSpec {
  double rate_hz = 44100.0;
  double center_hz = 19000.0;
  double pass_band_hz = 224.0;   // full width kept flat around the center
  double transition_hz = 170.0;  // each side, pass edge to stop edge
  double stop_atten_db = 60.0;   // demanded of the delivered design
  int taps = 1001;               // odd; 0 = derive from the other fields
};

struct FirFilter {
  FilterSpec spec;
  std::vector<double> h;  // symmetric: h[i] == h[n-1-i]
  double ripple = 0.0;    // converged equiripple deviation

  int group_delay() const { return (static_cast<int>(h.size()) - 1) / 2; }
};

// Throws std::invalid_argument when the band layout is impossible and
// std::runtime_error when the requested attenuation cannot be met by the
// requested tap count (measured, not estimated).
FirFilter design_bandpass(const FilterSpec& spec);

// |H(f)| in dB at one probe frequency.
double filter_response_db(const std::vector<double>& h, double freq_hz,
                          double rate_hz);

PcmStream apply_filter(const PcmStream& in, const FirFilter& f);

void write_taps(const std::string& path, const FirFilter& f);

}  // namespace doploc
