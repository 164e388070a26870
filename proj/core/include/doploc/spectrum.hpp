#pragma once

#include <complex>
#include <vector>

#include "doploc/acoustic.hpp"

namespace doploc {

// In-place radix-2 transform; size must be a power of two. The inverse
// applies the 1/N factor so a round trip reproduces the input.
void fft_radix2(std::vector<std::complex<double>>& x, bool inverse = false);

// Peak-frequency track from sliding Hann-windowed transforms. This is the
// comparison method: its resolution is pinned to rate/nfft no matter how
// finely the hop slices time, which is the point the loop tracker beats.
struct SpectralTrack {
  double resolution_hz = 0.0;  // bin width of the underlying transform
  std::vector<double> t;       // window-center times
  std::vector<double> freq_hz; // interpolated peak near the carrier
  double freq_at(double t_s) const;
};

SpectralTrack fft_baseline(const PcmStream& in, double center_hz,
                           double search_half_width_hz = 300.0,
                           int nfft = 8192, int hop = 1024);

// Displacement read the spectral way: integrated shift relative to the
// carrier, same sign convention as the phase-derived displacement.
std::vector<double> integrate_shift(const SpectralTrack& track,
                                    double carrier_hz, double speed_of_sound);

}  // namespace doploc
