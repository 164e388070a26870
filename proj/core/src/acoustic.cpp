#include "doploc/acoustic.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <stdexcept>

#include "doploc/csv_io.hpp"
#include "doploc/rng.hpp"

namespace doploc {
namespace {

// Spreading loss with a floor: below 0.1 m the point-source model stops
// being meaningful and the amplitude saturates instead of diverging.
double spread_gain(double L) { return 1.0 / std::max(L, 0.1); }

double directivity_gain(const AnchorNode& a, const Vector3d& to_phone) {
  if (a.directivity_exponent <= 0.0) return 1.0;
  const Vector3d facing(std::cos(a.elevation_rad) * std::cos(a.azimuth_rad),
                        std::cos(a.elevation_rad) * std::sin(a.azimuth_rad),
                        std::sin(a.elevation_rad));
  const double c = facing.dot(to_phone.normalized());
  return c <= 0.0 ? 0.0 : std::pow(c, a.directivity_exponent);
}

}  // namespace

PcmStream synthesize_channel(const Trajectory& traj, const AnchorNode& anchor,
                             const WorldConfig& world, std::uint64_t noise_seed) {
  if (traj.audio_p.empty())
    throw std::invalid_argument("synthesize_channel: trajectory has no audio track");
  PcmStream out;
  out.rate_hz = traj.audio_rate_hz;
  out.samples.resize(traj.audio_p.size());

  const double amp_1m = dbfs_to_amplitude(anchor.level_dbfs_at_1m);
  const double noise_rms = std::isfinite(world.noise_floor_dbfs)
                               ? dbfs_to_amplitude(world.noise_floor_dbfs)
                               : 0.0;
  const Vector3d pa = anchor.position();
  const double w = 2.0 * kPi * anchor.freq_hz;
  const double inv_v = 1.0 / world.speed_of_sound_mps;
  Rng rng(derive_seed(noise_seed, RngStream::acoustic_noise));

  for (size_t k = 0; k < out.samples.size(); ++k) {
    const double t = k / out.rate_hz;
    const Vector3d d = traj.audio_p[k] - pa;
    const double L = d.norm();
    const double amp = amp_1m * spread_gain(L) * directivity_gain(anchor, -d);
    // Carrier phase at emission time t - L/v. The huge absolute phase is
    // reduced mod 2*pi in double precision via remainder on the two parts.
    const double phase = std::remainder(w * t, 2.0 * kPi) -
                         std::remainder(w * L * inv_v, 2.0 * kPi);
    double s = amp * std::cos(phase);
    if (noise_rms > 0.0) s += noise_rms * rng.gaussian();
    if (s > 1.0 || s < -1.0) ++out.clipped;
    out.samples[k] = s;
  }
  return out;
}

PcmStream mix(const std::vector<const PcmStream*>& parts) {
  if (parts.empty()) throw std::invalid_argument("mix: no streams");
  PcmStream out;
  out.rate_hz = parts.front()->rate_hz;
  out.samples.assign(parts.front()->samples.size(), 0.0);
  for (const PcmStream* p : parts) {
    if (p->rate_hz != out.rate_hz)
      throw std::invalid_argument("mix: sample rate mismatch");
    if (p->samples.size() != out.samples.size())
      throw std::invalid_argument("mix: stream length mismatch");
    for (size_t k = 0; k < out.samples.size(); ++k) out.samples[k] += p->samples[k];
  }
  for (double s : out.samples)
    if (s > 1.0 || s < -1.0) ++out.clipped;
  return out;
}

void add_interferer(PcmStream& target, const Trajectory& traj,
                    const AnchorNode& interferer, const WorldConfig& world,
                    double volume) {
  if (volume < 0.0) throw std::invalid_argument("add_interferer: negative volume");
  WorldConfig quiet = world;
  quiet.noise_floor_dbfs = -std::numeric_limits<double>::infinity();
  PcmStream extra = synthesize_channel(traj, interferer, quiet, 0);
  if (extra.samples.size() != target.samples.size() ||
      extra.rate_hz != target.rate_hz)
    throw std::invalid_argument("add_interferer: stream geometry mismatch");
  target.clipped = 0;
  for (size_t k = 0; k < target.samples.size(); ++k) {
    target.samples[k] += volume * extra.samples[k];
    if (target.samples[k] > 1.0 || target.samples[k] < -1.0) ++target.clipped;
  }
}

PhaseOracle phase_oracle(const Trajectory& traj, const AnchorNode& anchor,
                         const WorldConfig& world) {
  if (traj.audio_p.empty())
    throw std::invalid_argument("phase_oracle: trajectory has no audio track");
  PhaseOracle o;
  o.anchor_id = anchor.id;
  o.freq_hz = anchor.freq_hz;
  o.rate_hz = traj.audio_rate_hz;
  const size_t n = traj.audio_p.size();
  o.t.resize(n);
  o.phi_true.resize(n);
  o.f_shift_true.resize(n);
  o.L_true.resize(n);

  const Vector3d pa = anchor.position();
  const double k_phase = 2.0 * kPi * anchor.freq_hz / world.speed_of_sound_mps;
  const double k_freq = anchor.freq_hz / world.speed_of_sound_mps;
  const double L0 = (traj.audio_p.front() - pa).norm();
  for (size_t k = 0; k < n; ++k) {
    const Vector3d d = traj.audio_p[k] - pa;
    const double L = d.norm();
    o.t[k] = k / o.rate_hz;
    o.L_true[k] = L;
    o.phi_true[k] = -k_phase * (L - L0);
    // dL/dt = unit(d) . v; approaching (negative dL/dt) raises the pitch.
    o.f_shift_true[k] = -k_freq * d.dot(traj.audio_v[k]) / std::max(L, 1e-12);
  }
  return o;
}

void PhaseOracle::write_csv(const std::string& path) const {
  CsvWriter w(path);
  w.header("t,anchor_id,phi_true,f_shift_true,L_true");
  for (size_t k = 0; k < t.size(); ++k)
    w.row({format_number(t[k]), anchor_id, format_number(phi_true[k]),
           format_number(f_shift_true[k]), format_number(L_true[k])});
}

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
               char((v >> 24) & 0xff)};
  f.write(b, 4);
}
void put_u16(std::ofstream& f, std::uint16_t v) {
  char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
  f.write(b, 2);
}

}  // namespace

int write_wav(const std::string& path, const PcmStream& s) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_wav: cannot open " + path);
  const std::uint32_t n = static_cast<std::uint32_t>(s.samples.size());
  const std::uint32_t rate = static_cast<std::uint32_t>(std::llround(s.rate_hz));
  f.write("RIFF", 4);
  put_u32(f, 36 + 2 * n);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  put_u32(f, 16);
  put_u16(f, 1);  // PCM
  put_u16(f, 1);  // mono
  put_u32(f, rate);
  put_u32(f, rate * 2);
  put_u16(f, 2);
  put_u16(f, 16);
  f.write("data", 4);
  put_u32(f, 2 * n);
  int clipped = 0;
  for (double v : s.samples) {
    double x = v;
    if (x > 1.0) x = 1.0, ++clipped;
    if (x < -1.0) x = -1.0, ++clipped;
    const std::int16_t q = static_cast<std::int16_t>(std::lrint(x * 32767.0));
    put_u16(f, static_cast<std::uint16_t>(q));
  }
  return clipped;
}

PcmStream read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_wav: cannot open " + path);
  std::vector<char> data((std::istreambuf_iterator<char>(f)),
                         std::istreambuf_iterator<char>());
  auto u32 = [&](size_t off) {
    return std::uint32_t(std::uint8_t(data[off])) |
           (std::uint32_t(std::uint8_t(data[off + 1])) << 8) |
           (std::uint32_t(std::uint8_t(data[off + 2])) << 16) |
           (std::uint32_t(std::uint8_t(data[off + 3])) << 24);
  };
  auto u16 = [&](size_t off) {
    return std::uint16_t(std::uint8_t(data[off])) |
           (std::uint16_t(std::uint8_t(data[off + 1])) << 8);
  };
  if (data.size() < 44 || std::memcmp(data.data(), "RIFF", 4) ||
      std::memcmp(data.data() + 8, "WAVE", 4))
    throw std::runtime_error("read_wav: not a RIFF/WAVE file: " + path);

  size_t off = 12;
  double rate = 0;
  PcmStream out;
  bool got_fmt = false;
  while (off + 8 <= data.size()) {
    const bool is_fmt = !std::memcmp(data.data() + off, "fmt ", 4);
    const bool is_data = !std::memcmp(data.data() + off, "data", 4);
    const std::uint32_t len = u32(off + 4);
    if (is_fmt) {
      if (u16(off + 8) != 1 || u16(off + 10) != 1 || u16(off + 22) != 16)
        throw std::runtime_error("read_wav: expected 16-bit mono PCM: " + path);
      rate = u32(off + 12);
      got_fmt = true;
    } else if (is_data) {
      if (!got_fmt) throw std::runtime_error("read_wav: data before fmt: " + path);
      const size_t n = len / 2;
      out.samples.resize(n);
      for (size_t k = 0; k < n; ++k) {
        const std::int16_t q = static_cast<std::int16_t>(u16(off + 8 + 2 * k));
        out.samples[k] = q / 32767.0;
      }
    }
    off += 8 + len + (len & 1);
  }
  if (rate <= 0 || out.samples.empty())
    throw std::runtime_error("read_wav: missing fmt or data chunk: " + path);
  out.rate_hz = rate;
  return out;
}

}  // namespace doploc
