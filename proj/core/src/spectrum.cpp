#include "doploc/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "doploc/geometry.hpp"

namespace doploc {

void fft_radix2(std::vector<std::complex<double>>& x, bool inverse) {
  const size_t n = x.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw std::invalid_argument("fft_radix2: size must be a power of two");

  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }

  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = x[i + j];
        const std::complex<double> v = x[i + j + len / 2] * w;
        x[i + j] = u + v;
        x[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& v : x) v /= static_cast<double>(n);
}

SpectralTrack fft_baseline(const PcmStream& in, double center_hz,
                           double search_half_width_hz, int nfft, int hop) {
  if (nfft < 8 || (nfft & (nfft - 1)) != 0)
    throw std::invalid_argument("fft_baseline: nfft must be a power of two");
  if (hop < 1) throw std::invalid_argument("fft_baseline: hop must be positive");
  const double rate = in.rate_hz;
  SpectralTrack track;
  track.resolution_hz = rate / nfft;

  std::vector<double> window(nfft);
  for (int i = 0; i < nfft; ++i)
    window[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / (nfft - 1)));

  const long n = static_cast<long>(in.samples.size());
  const long lo_bin =
      std::max(1L, std::lround((center_hz - search_half_width_hz) / rate * nfft));
  const long hi_bin = std::min<long>(
      nfft / 2 - 1, std::lround((center_hz + search_half_width_hz) / rate * nfft));
  if (lo_bin >= hi_bin)
    throw std::invalid_argument("fft_baseline: search band is empty");

  std::vector<std::complex<double>> buf(nfft);
  for (long s = 0; s + nfft <= n; s += hop) {
    for (int i = 0; i < nfft; ++i)
      buf[i] = {in.samples[s + i] * window[i], 0.0};
    fft_radix2(buf);

    long best = lo_bin;
    double best_mag = 0.0;
    for (long b = lo_bin; b <= hi_bin; ++b) {
      const double m = std::norm(buf[b]);
      if (m > best_mag) {
        best_mag = m;
        best = b;
      }
    }
    // Parabolic refinement on log magnitudes of the peak and neighbors.
    const double m0 = 0.5 * std::log(std::max(std::norm(buf[best - 1]), 1e-300));
    const double m1 = 0.5 * std::log(std::max(best_mag, 1e-300));
    const double m2 = 0.5 * std::log(std::max(std::norm(buf[best + 1]), 1e-300));
    const double denom = m0 - 2.0 * m1 + m2;
    double shift = 0.0;
    if (denom < 0.0) shift = std::clamp(0.5 * (m0 - m2) / denom, -0.5, 0.5);

    track.t.push_back((s + (nfft - 1) / 2.0) / rate);
    track.freq_hz.push_back((best + shift) * rate / nfft);
  }
  return track;
}

double SpectralTrack::freq_at(double t_s) const {
  if (t.empty()) return 0.0;
  if (t_s <= t.front()) return freq_hz.front();
  if (t_s >= t.back()) return freq_hz.back();
  size_t i = 1;
  while (i < t.size() && t[i] < t_s) ++i;
  const double f = (t_s - t[i - 1]) / (t[i] - t[i - 1]);
  return freq_hz[i - 1] * (1.0 - f) + freq_hz[i] * f;
}

std::vector<double> integrate_shift(const SpectralTrack& track,
                                    double carrier_hz, double speed_of_sound) {
  std::vector<double> s(track.t.size(), 0.0);
  const double scale = speed_of_sound / carrier_hz;
  for (size_t i = 1; i < s.size(); ++i) {
    const double dt = track.t[i] - track.t[i - 1];
    const double mid = 0.5 * (track.freq_hz[i] + track.freq_hz[i - 1]) - carrier_hz;
    s[i] = s[i - 1] + scale * mid * dt;
  }
  return s;
}

}  // namespace doploc
