#include "doploc/agc.hpp"

#include <cmath>
#include <stdexcept>

#include "doploc/geometry.hpp"

namespace doploc {

AgcResult normalize_amplitude(const PcmStream& in, const AgcConfig& cfg) {
  if (cfg.window < 1) throw std::invalid_argument("agc: window must be positive");
  if (cfg.leak <= 0.0 || cfg.leak > 1.0)
    throw std::invalid_argument("agc: leak must be in (0, 1]");

  AgcResult res;
  res.out.rate_hz = in.rate_hz;
  const size_t n = in.samples.size();
  res.out.samples.resize(n);
  res.gain.resize(n);

  const double log_max = std::log(cfg.max_gain);
  // For a sine, mean|x| = (2/pi) * amplitude; the pi/2 factor makes the
  // estimate read in amplitude units so the settled gain is 1/amplitude.
  const double scale = cfg.legacy_seventh ? cfg.window / 7.0 : kPi / 2.0;

  const double a_est =
      1.0 - std::exp(-2.0 * kPi * cfg.estimate_lpf_hz / in.rate_hz);

  double win_sum = 0.0;
  double log_gain = 0.0;
  double amp_prev = 0.0;  // smoothed estimate as of the previous sample
  for (size_t k = 0; k < n; ++k) {
    if (k > 0) {
      log_gain = (1.0 - cfg.leak) * log_gain;
      if (amp_prev > 0.0) {
        log_gain -= cfg.leak * std::log(amp_prev);
      } else {
        log_gain = log_max;  // silent input: pin the gain at the ceiling
        res.gain_clipped = true;
      }
      if (log_gain > log_max) {
        log_gain = log_max;
        res.gain_clipped = true;
      }
    }
    const double g = std::exp(log_gain);
    res.gain[k] = g;
    res.out.samples[k] = g * in.samples[k];

    win_sum += std::abs(in.samples[k]);
    if (k >= static_cast<size_t>(cfg.window))
      win_sum -= std::abs(in.samples[k - cfg.window]);
    const size_t have = std::min(k + 1, static_cast<size_t>(cfg.window));
    const double amp_raw = scale * win_sum / static_cast<double>(have);
    amp_prev = k == 0 ? amp_raw : amp_prev + a_est * (amp_raw - amp_prev);
  }
  return res;
}

}  // namespace doploc
