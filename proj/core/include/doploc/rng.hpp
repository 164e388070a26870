#pragma once
// Deterministic random streams. Every stochastic stage derives its own
// generator from (master seed, stream tag, counter) so that trials are
// reproducible bit-for-bit regardless of evaluation order, and re-runs with
// the same seed produce identical output files.

#include <cmath>
#include <cstdint>

namespace doploc {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stream tags keep independent noise sources decorrelated within a trial.
enum class RngStream : std::uint64_t {
  acoustic_noise = 1,
  accel_noise = 2,
  gyro_noise = 3,
  accel_bias = 4,
  pattern_shape = 5,
  trial_geometry = 6,
  angle_noise = 7,
  initial_error = 8,
};

inline std::uint64_t derive_seed(std::uint64_t master, RngStream stream,
                                 std::uint64_t counter = 0) {
  std::uint64_t s = splitmix64(master ^ 0xa02f7d8c91bc23d5ull);
  s = splitmix64(s ^ static_cast<std::uint64_t>(stream));
  return splitmix64(s ^ (counter * 0x9e3779b97f4a7c15ull + 1));
}

// xoshiro256** with splitmix-expanded state. Fixed algorithm (not the
// implementation-defined std distributions) so streams are identical across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    s_[0] = splitmix64(seed);
    s_[1] = splitmix64(s_[0]);
    s_[2] = splitmix64(s_[1]);
    s_[3] = splitmix64(s_[2]);
    have_spare_ = false;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Marsaglia polar method; exact algorithm pinned for reproducibility.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool have_spare_;
};

}  // namespace doploc
