#include "doploc/pll.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "doploc/geometry.hpp"

namespace doploc {
namespace {

double one_pole_coeff(double cutoff_hz, double rate_hz) {
  return 1.0 - std::exp(-2.0 * kPi * cutoff_hz / rate_hz);
}

// Least-squares slope of y over its last `count` entries, rad per sample.
double tail_slope(const std::vector<double>& y, size_t end, size_t count) {
  if (count < 2 || end < count) return 0.0;
  const size_t b = end - count;
  const double mid = (count - 1) / 2.0;
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < count; ++i) {
    const double d = static_cast<double>(i) - mid;
    num += d * y[b + i];
    den += d * d;
  }
  return num / den;
}

}  // namespace

PllTracker::PllTracker(const PllConfig& cfg) : cfg_(cfg) {
  if (cfg.rate_hz <= 0 || cfg.carrier_hz <= 0 ||
      cfg.carrier_hz >= cfg.rate_hz / 2)
    throw std::invalid_argument("pll: carrier must sit below Nyquist");
  if (cfg.mu <= 0 || cfg.mu >= 1)
    throw std::invalid_argument("pll: mu must be in (0, 1)");
  w0_ = 2.0 * kPi * cfg.carrier_hz / cfg.rate_hz;
  carrier_phase_ = 0.0;
  theta_ = 0.0;
  err_lp_ = 0.0;
  err_corr_ = 0.0;
  err_pow_ = 0.125;  // squared error of an unlocked loop, see lock_quality
  a_loop_ = one_pole_coeff(cfg.loop_lpf_hz, cfg.rate_hz);
  a_corr_ = one_pole_coeff(cfg.corr_lpf_hz, cfg.rate_hz);
  a_lock_ = one_pole_coeff(cfg.lock_lpf_hz, cfg.rate_hz);
}

double PllTracker::process(double sample) {
  carrier_phase_ += w0_;
  if (carrier_phase_ > kPi) carrier_phase_ -= 2.0 * kPi;
  const double err = sample * std::sin(carrier_phase_ + theta_);
  err_lp_ += a_loop_ * (err - err_lp_);
  err_corr_ += a_corr_ * (err_lp_ - err_corr_);
  err_pow_ += a_lock_ * (err_lp_ * err_lp_ - err_pow_);
  const double half = cfg_.mu / 2.0;
  const double step = std::clamp(cfg_.mu * err_lp_, -half, half);
  theta_ -= step;
  return corrected_phase();
}

double PllTracker::corrected_phase() const {
  // Locked, the filtered error sits at half the sine of the tracking lag;
  // reading it back removes the steady-state lag a first-order loop keeps
  // under a frequency offset.
  const double s = std::clamp(2.0 * err_corr_, -0.999, 0.999);
  return theta_ - std::asin(s);
}

double PllTracker::lock_quality() const {
  // Unlocked, the error is a half-amplitude sine of drifting phase, mean
  // square 1/8; the quality reads 0 there and 1 at zero error power.
  const double q = 1.0 - std::sqrt(std::max(err_pow_, 0.0) * 8.0);
  return std::clamp(q, 0.0, 1.0);
}

void PllTracker::skip(double duration_s, double freq_offset_hz) {
  const long n = std::lround(duration_s * cfg_.rate_hz);
  if (n <= 0) return;
  carrier_phase_ = std::remainder(carrier_phase_ + n * w0_, 2.0 * kPi);
  theta_ += 2.0 * kPi * freq_offset_hz * n / cfg_.rate_hz;
}

PhaseTrack track_phase(const PcmStream& in, const PllConfig& cfg,
                       const DutyCycle& duty) {
  if (in.rate_hz != cfg.rate_hz)
    throw std::invalid_argument("track_phase: stream and loop rate differ");
  const double frac = std::clamp(duty.fraction, 0.0, 1.0);
  const long frame_len = std::lround(duty.frame_s * cfg.rate_hz);
  if (frame_len < 2) throw std::invalid_argument("track_phase: frame too short");
  const long on_len =
      frac >= 1.0 ? frame_len
                  : std::max<long>(2, std::lround(frac * frame_len));

  PllTracker pll(cfg);
  const size_t n = in.samples.size();
  PhaseTrack track;
  track.rate_hz = cfg.rate_hz;
  track.carrier_hz = cfg.carrier_hz;
  track.phi.resize(n);
  track.theta.resize(n);
  track.lock.resize(n);
  track.observed.resize(n);

  size_t k = 0;
  while (k < n) {
    const size_t burst_end = std::min(n, k + static_cast<size_t>(on_len));
    const size_t frame_end = std::min(n, k - (k % frame_len) + frame_len);
    for (; k < burst_end; ++k) {
      track.phi[k] = pll.process(in.samples[k]);
      track.theta[k] = pll.theta();
      track.lock[k] = static_cast<float>(pll.lock_quality());
      track.observed[k] = 1;
    }
    if (k >= n || k >= frame_end) {
      k = std::min(n, frame_end);
      continue;
    }
    // Gap: hold the burst-tail slope so the phase keeps moving with the
    // last seen Doppler and the next burst starts near lock.
    const size_t tail = std::min<size_t>(441, static_cast<size_t>(on_len));
    const double slope = tail_slope(track.phi, k, tail);  // rad per sample
    const double f_hat = slope * cfg.rate_hz / (2.0 * kPi);
    const double phi0 = track.phi[k - 1];
    const double theta0 = track.theta[k - 1];
    const float lock0 = track.lock[k - 1];
    const size_t gap_begin = k;
    for (; k < frame_end; ++k) {
      const double adv = slope * static_cast<double>(k - gap_begin + 1);
      track.phi[k] = phi0 + adv;
      track.theta[k] = theta0 + adv;
      track.lock[k] = lock0;
      track.observed[k] = 0;
    }
    pll.skip(static_cast<double>(frame_end - gap_begin) / cfg.rate_hz, f_hat);
  }
  return track;
}

Kinematics phase_to_kinematics(const PhaseTrack& track, double speed_of_sound,
                               int slope_window) {
  if (slope_window < 3 || slope_window % 2 == 0)
    throw std::invalid_argument("phase_to_kinematics: window must be odd, >= 3");
  const size_t n = track.phi.size();
  Kinematics kin;
  kin.rate_hz = track.rate_hz;
  kin.displacement_m.resize(n);
  kin.freq_shift_hz.resize(n);
  if (n == 0) return kin;

  const double s_per_rad = speed_of_sound / (2.0 * kPi * track.carrier_hz);
  const double phi0 = track.phi[0];
  for (size_t k = 0; k < n; ++k)
    kin.displacement_m[k] = s_per_rad * (track.phi[k] - phi0);

  const long m_full = (slope_window - 1) / 2;
  const double to_hz = track.rate_hz / (2.0 * kPi);
  for (size_t k = 0; k < n; ++k) {
    const long m = std::min<long>({m_full, static_cast<long>(k),
                                   static_cast<long>(n - 1 - k)});
    if (m < 1) {
      kin.freq_shift_hz[k] = 0.0;
      continue;
    }
    double num = 0.0;
    for (long d = 1; d <= m; ++d)
      num += d * (track.phi[k + d] - track.phi[k - d]);
    const double den = m * (m + 1.0) * (2.0 * m + 1.0) / 3.0;
    kin.freq_shift_hz[k] = num / den * to_hz;
  }
  if (n >= 2) {
    kin.freq_shift_hz[0] = kin.freq_shift_hz[1];
    kin.freq_shift_hz[n - 1] = kin.freq_shift_hz[n - 2];
  }
  return kin;
}

namespace {

double interp_track(const std::vector<double>& y, double rate, double t_s) {
  if (y.empty()) return 0.0;
  const double x = t_s * rate;
  if (x <= 0.0) return y.front();
  const size_t i = static_cast<size_t>(x);
  if (i + 1 >= y.size()) return y.back();
  const double f = x - static_cast<double>(i);
  return y[i] * (1.0 - f) + y[i + 1] * f;
}

}  // namespace

double Kinematics::displacement_at(double t_s) const {
  return interp_track(displacement_m, rate_hz, t_s);
}

double Kinematics::freq_shift_at(double t_s) const {
  return interp_track(freq_shift_hz, rate_hz, t_s);
}

}  // namespace doploc
