#include "doploc/fir.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "doploc/csv_io.hpp"
#include "doploc/geometry.hpp"

namespace doploc {
namespace {

// ---- minimax exchange on a dense frequency grid -------------------------
//
// Odd-length symmetric filters reduce to a cosine polynomial
//   A(w) = sum_k a_k cos(k w),  w = 2*pi*f,
// approximated in the Chebyshev sense over the band set. The exchange keeps
// r+1 alternation points for r basis functions; barycentric interpolation on
// x = cos(w) keeps the per-iteration cost at grid*r.

struct Band {
  double lo, hi;   // normalized [0, 0.5]
  double desired;  // 0 or 1
  double weight;
};

struct Grid {
  std::vector<double> f;    // normalized frequency
  std::vector<double> x;    // cos(2*pi*f), strictly decreasing
  std::vector<double> des;
  std::vector<double> wt;
  std::vector<size_t> band_edges;  // grid indices that are band boundaries
};

Grid make_grid(const std::vector<Band>& bands, int r, int density) {
  Grid g;
  double total = 0;
  for (const Band& b : bands) total += b.hi - b.lo;
  const int target = std::max(r * density, 64);
  for (const Band& b : bands) {
    int n = std::max(2, static_cast<int>(std::lround(target * (b.hi - b.lo) / total)));
    g.band_edges.push_back(g.f.size());
    for (int i = 0; i < n; ++i) {
      const double f = b.lo + (b.hi - b.lo) * i / (n - 1);
      g.f.push_back(f);
      g.des.push_back(b.desired);
      g.wt.push_back(b.weight);
    }
    g.band_edges.push_back(g.f.size() - 1);
  }
  g.x.resize(g.f.size());
  for (size_t i = 0; i < g.f.size(); ++i) g.x[i] = std::cos(2.0 * kPi * g.f[i]);
  return g;
}

// Barycentric weights of the whole node set, accumulated in the log domain
// and commonly rescaled. Only weight ratios enter the interpolant and the
// level formula, and the raw node-difference products leave double range
// already around 500 nodes.
std::vector<double> bary_weights(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<double> lg(n);
  std::vector<int> sgn(n);
  for (size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    int s = 1;
    for (size_t i = 0; i < n; ++i) {
      if (i == j) continue;
      const double d = 2.0 * (x[j] - x[i]);
      acc += std::log2(std::abs(d));
      if (d < 0) s = -s;
    }
    lg[j] = -acc;
    sgn[j] = s;
  }
  const double top = *std::max_element(lg.begin(), lg.end());
  std::vector<double> w(n);
  for (size_t j = 0; j < n; ++j) w[j] = sgn[j] * std::exp2(lg[j] - top);
  return w;
}

class Interpolant {
 public:
  // Nodes with target values; classic form drops no node here, callers pass
  // the r leading extrema with their equiripple-adjusted values.
  Interpolant(std::vector<double> x, std::vector<double> y)
      : x_(std::move(x)), y_(std::move(y)), w_(x_.size()) {
    w_ = bary_weights(x_);
  }

  double eval(double x) const {
    double num = 0, den = 0;
    for (size_t j = 0; j < x_.size(); ++j) {
      const double dx = x - x_[j];
      if (std::abs(dx) < 1e-13) return y_[j];
      const double q = w_[j] / dx;
      num += q * y_[j];
      den += q;
    }
    return num / den;
  }

 private:
  std::vector<double> x_, y_, w_;
};

struct ExchangeResult {
  std::vector<double> a_at_nodes_x;  // node positions (cos domain)
  std::vector<double> a_at_nodes_y;  // A values there
  double delta = 0.0;
  bool converged = false;
};

double bessel_i0(double x) {
  double term = 1.0, sum = 1.0;
  const double q = 0.25 * x * x;
  for (int m = 1; m < 60; ++m) {
    term *= q / (m * m);
    sum += term;
    if (term < sum * 1e-14) break;
  }
  return sum;
}

// Exactly r+1 indices out of the candidate peaks, alternating in error sign
// wherever the peaks allow it. Same-sign runs collapse to their strongest
// member; an excess is thinned end point first, then as weakest adjacent
// pairs, both of which preserve alternation. A deficit of a few is padded
// with the strongest leftover peaks: the padded points break strict
// alternation for one sweep, which the next error field then resolves, and
// that beats abandoning an otherwise sound set. Empty when the deficit is
// beyond repair.
std::vector<size_t> alternation_set(const std::vector<size_t>& cand,
                                    const std::vector<double>& err, int r) {
  const size_t need = static_cast<size_t>(r) + 1;
  std::vector<size_t> merged;
  for (size_t c : cand) {
    if (!merged.empty() && (err[merged.back()] >= 0) == (err[c] >= 0)) {
      if (std::abs(err[c]) > std::abs(err[merged.back()])) merged.back() = c;
    } else {
      merged.push_back(c);
    }
  }
  if (merged.size() + 8 < need) return {};
  if (merged.size() < need) {
    std::vector<size_t> rest;
    for (size_t c : cand)
      if (!std::binary_search(merged.begin(), merged.end(), c)) rest.push_back(c);
    std::sort(rest.begin(), rest.end(), [&](size_t a, size_t b) {
      return std::abs(err[a]) > std::abs(err[b]);
    });
    for (size_t j = 0; j < rest.size() && merged.size() < need; ++j)
      merged.insert(std::lower_bound(merged.begin(), merged.end(), rest[j]),
                    rest[j]);
    if (merged.size() < need) return {};
  }
  if ((merged.size() - need) % 2 == 1) {
    if (std::abs(err[merged.front()]) <= std::abs(err[merged.back()]))
      merged.erase(merged.begin());
    else
      merged.pop_back();
  }
  while (merged.size() > need) {
    size_t pick = 0;
    double best = 1e300;
    for (size_t j = 0; j + 1 < merged.size(); ++j) {
      const double m =
          std::max(std::abs(err[merged[j]]), std::abs(err[merged[j + 1]]));
      if (m < best) {
        best = m;
        pick = j;
      }
    }
    merged.erase(merged.begin() + pick, merged.begin() + pick + 2);
  }
  return merged;
}

// Alternation peaks of a Kaiser-windowed reference with the same degree.
// Its ripples already sit where the equiripple extrema will end up, pass
// band included, which a uniform seed cannot deliver: interpolating the raw
// desired values across a narrow band swings by orders of magnitude next to
// the band edges and the same-sign spikes there swallow the alternation.
// Returns r+1 alternating grid indices, or empty when the reference error
// carries too few sign changes to seed the exchange.
std::vector<size_t> windowed_init_at(const Grid& g, int r, double beta);

std::vector<size_t> windowed_init(const Grid& g, int r) {
  // A window matching the achievable ripple sits closest to the equiripple
  // layout, so walk the stiffness both ways: up for generous transitions
  // where the true level is far below the 60 dB shape, down when a looser
  // window ripples hard enough near the edges to recover missing sign
  // changes.
  for (double beta : {5.65, 8.0, 11.0, 14.0, 17.0, 20.0, 4.5, 3.5}) {
    std::vector<size_t> ext = windowed_init_at(g, r, beta);
    if (!ext.empty()) return ext;
  }
  return {};
}

std::vector<size_t> windowed_init_at(const Grid& g, int r, double beta) {
  const size_t npts = g.f.size();
  // Ideal multiband response with cutoffs at mid-transition, tapered by a
  // Kaiser window.
  std::vector<double> h(r + 1);  // h[k] is tap M+k of the symmetric filter
  const size_t nb = g.band_edges.size() / 2;
  for (size_t b = 0; b < nb; ++b) {
    const double des = g.des[g.band_edges[2 * b]];
    if (des == 0.0) continue;
    const double lo = b == 0 ? 0.0
                             : 0.5 * (g.f[g.band_edges[2 * b]] +
                                      g.f[g.band_edges[2 * b - 1]]);
    const double hi = b == nb - 1 ? 0.5
                                  : 0.5 * (g.f[g.band_edges[2 * b + 1]] +
                                           g.f[g.band_edges[2 * b + 2]]);
    h[0] += des * 2.0 * (hi - lo);
    for (int k = 1; k <= r; ++k)
      h[k] += des * (std::sin(2.0 * kPi * hi * k) - std::sin(2.0 * kPi * lo * k)) /
              (kPi * k);
  }
  const double denom = bessel_i0(beta);
  for (int k = 1; k <= r; ++k) {
    const double t = static_cast<double>(k) / r;
    h[k] *= bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - t * t))) / denom;
  }

  std::vector<double> err(npts);
  for (size_t i = 0; i < npts; ++i) {
    double a = h[0];
    const double w = 2.0 * kPi * g.f[i];
    for (int k = 1; k <= r; ++k) a += 2.0 * h[k] * std::cos(w * k);
    err[i] = g.wt[i] * (a - g.des[i]);
  }

  std::vector<size_t> cand;
  for (size_t i = 0; i < npts; ++i) {
    const bool edge = std::find(g.band_edges.begin(), g.band_edges.end(), i) !=
                      g.band_edges.end();
    if (edge) {
      cand.push_back(i);
      continue;
    }
    const double e = std::abs(err[i]);
    if (e >= std::abs(err[i - 1]) && e >= std::abs(err[i + 1]) && e > 0)
      cand.push_back(i);
  }
  return alternation_set(cand, err, r);
}

ExchangeResult remez_exchange(const Grid& g, int r, int max_iter) {
  const size_t npts = g.f.size();
  std::vector<size_t> ext = windowed_init(g, r);
  if (ext.size() != static_cast<size_t>(r + 1)) {
    ext.resize(r + 1);
    for (int j = 0; j <= r; ++j)
      ext[j] = j * (npts - 1) / r;
  }

  ExchangeResult res;
  std::vector<double> xe(r + 1), de(r + 1), we(r + 1), bw(r + 1);
  std::vector<double> err(npts);

  for (int iter = 0; iter < max_iter; ++iter) {
    for (int j = 0; j <= r; ++j) {
      xe[j] = g.x[ext[j]];
      de[j] = g.des[ext[j]];
      we[j] = g.wt[ext[j]];
    }
    bw = bary_weights(xe);

    double num = 0, den = 0, sign = 1;
    for (int j = 0; j <= r; ++j) {
      num += bw[j] * de[j];
      den += sign * bw[j] / we[j];
      sign = -sign;
    }
    const double delta = num / den;

    // A node set that starves a narrow band of barycentric weight yields a
    // level at rounding scale; the interpolant then runs straight through
    // the desired values and flat bands lose their alternation. Floor the
    // working ripple at a seed far below any viable design level so every
    // internode interval keeps oscillating, and let the honest level take
    // over as soon as it clears the seed.
    const double level = std::copysign(std::max(std::abs(delta), 1e-8), delta);

    // Interpolate through the first r extrema at their adjusted levels.
    std::vector<double> xi(xe.begin(), xe.end() - 1);
    std::vector<double> yi(r);
    sign = 1;
    for (int j = 0; j < r; ++j) {
      yi[j] = de[j] - sign * level / we[j];
      sign = -sign;
    }
    Interpolant A(xi, yi);

    for (size_t i = 0; i < npts; ++i)
      err[i] = g.wt[i] * (A.eval(g.x[i]) - g.des[i]);

    // Collect alternation candidates: band edges plus local |error| peaks.
    std::vector<size_t> cand;
    auto is_edge = [&](size_t i) {
      return std::find(g.band_edges.begin(), g.band_edges.end(), i) !=
             g.band_edges.end();
    };
    for (size_t i = 0; i < npts; ++i) {
      if (is_edge(i)) {
        cand.push_back(i);
        continue;
      }
      const double e = std::abs(err[i]);
      const bool peak = e >= std::abs(err[i - 1]) && e >= std::abs(err[i + 1]);
      if (peak && e >= std::abs(level) * 1e-3) cand.push_back(i);
    }
    std::vector<size_t> merged = alternation_set(cand, err, r);
    if (merged.size() != static_cast<size_t>(r + 1)) {
      // Degenerate iteration; densify would be the caller's move.
      res.delta = delta;
      res.converged = false;
      res.a_at_nodes_x = xi;
      res.a_at_nodes_y = yi;
      return res;
    }

    bool same = true;
    for (int j = 0; j <= r; ++j)
      if (merged[j] != ext[j]) same = false;

    // Accept once the worst error of the new set matches the equiripple
    // level of the current one; the set itself may keep shuffling between
    // equivalent grid points long after the design has stopped improving.
    // A generous spec can push the true level below what doubles resolve;
    // orders of magnitude under any band target is equally final.
    double emax = 0;
    for (size_t m : merged) emax = std::max(emax, std::abs(err[m]));
    const bool ripple_even = emax <= std::abs(delta) * (1.0 + 1e-3);
    const bool negligible = emax <= 1e-7;

    std::copy(merged.begin(), merged.end(), ext.begin());

    if (same || ripple_even || negligible) {
      res.delta = emax;
      res.converged = true;
      // Final interpolant nodes/values for coefficient reconstruction.
      for (int j = 0; j <= r; ++j) {
        xe[j] = g.x[ext[j]];
        de[j] = g.des[ext[j]];
        we[j] = g.wt[ext[j]];
      }
      bw = bary_weights(xe);
      num = den = 0;
      sign = 1;
      for (int j = 0; j <= r; ++j) {
        num += bw[j] * de[j];
        den += sign * bw[j] / we[j];
        sign = -sign;
      }
      const double d2 = num / den;
      res.a_at_nodes_x.assign(xe.begin(), xe.end() - 1);
      res.a_at_nodes_y.resize(r);
      sign = 1;
      for (int j = 0; j < r; ++j) {
        res.a_at_nodes_y[j] = de[j] - sign * d2 / we[j];
        sign = -sign;
      }
      return res;
    }
  }
  res.converged = false;
  return res;
}

}  // namespace

double filter_response_db(const std::vector<double>& h, double freq_hz,
                          double rate_hz) {
  const double w = 2.0 * kPi * freq_hz / rate_hz;
  double re = 0, im = 0;
  for (size_t n = 0; n < h.size(); ++n) {
    re += h[n] * std::cos(w * n);
    im -= h[n] * std::sin(w * n);
  }
  return 20.0 * std::log10(std::max(std::hypot(re, im), 1e-300));
}

FirFilter design_bandpass(const FilterSpec& spec_in) {
  FilterSpec spec = spec_in;
  const double fs = spec.rate_hz;
  if (fs <= 0) throw std::invalid_argument("design_bandpass: bad sample rate");
  const double p_lo = (spec.center_hz - spec.pass_band_hz / 2.0) / fs;
  const double p_hi = (spec.center_hz + spec.pass_band_hz / 2.0) / fs;
  const double s_lo = p_lo - spec.transition_hz / fs;
  const double s_hi = p_hi + spec.transition_hz / fs;
  if (spec.pass_band_hz <= 0 || spec.transition_hz <= 0)
    throw std::invalid_argument("design_bandpass: band widths must be positive");
  if (s_lo <= 0.0 || s_hi >= 0.5) {
    std::ostringstream os;
    os << "design_bandpass: band [" << s_lo * fs << ", " << s_hi * fs
       << "] Hz does not fit between DC and Nyquist";
    throw std::invalid_argument(os.str());
  }

  if (spec.taps == 0) {
    // Standard transition-width estimate, rounded up to odd.
    const double dw = 2.0 * kPi * spec.transition_hz / fs;
    int n = static_cast<int>(std::ceil((spec.stop_atten_db - 7.95) / (2.285 * dw))) + 1;
    if (n % 2 == 0) ++n;
    spec.taps = std::max(n, 11);
  }
  if (spec.taps % 2 == 0 || spec.taps < 11)
    throw std::invalid_argument("design_bandpass: taps must be odd and at least 11");

  const int n = spec.taps;
  const int r = (n - 1) / 2 + 1;  // cosine basis size

  std::vector<Band> bands = {{0.0, s_lo, 0.0, 1.0},
                             {p_lo, p_hi, 1.0, 1.0},
                             {s_hi, 0.5, 0.0, 1.0}};

  ExchangeResult ex;
  for (int density : {16, 24, 32}) {
    Grid g = make_grid(bands, r, density);
    ex = remez_exchange(g, r, 60);
    if (ex.converged) break;
  }
  if (!ex.converged)
    throw std::runtime_error(
        "design_bandpass: exchange failed to converge for this band layout "
        "and tap budget");

  // Reconstruct the impulse response by frequency sampling the converged
  // cosine polynomial at the n-point DFT frequencies.
  Interpolant A(ex.a_at_nodes_x, ex.a_at_nodes_y);
  const int half = (n - 1) / 2;
  std::vector<double> samples(half + 1);
  for (int m = 0; m <= half; ++m)
    samples[m] = A.eval(std::cos(2.0 * kPi * m / n));

  FirFilter out;
  out.spec = spec;
  out.ripple = ex.delta;
  out.h.resize(n);
  for (int k = 0; k <= half; ++k) {
    double acc = samples[0];
    for (int m = 1; m <= half; ++m)
      acc += 2.0 * samples[m] * std::cos(2.0 * kPi * m * (k - half) / n);
    out.h[k] = acc / n;
    out.h[n - 1 - k] = out.h[k];  // even symmetry by construction
  }

  // The contract is measured, not assumed: probe the worst stop-band level.
  double worst = -1e9;
  const double probes[] = {s_lo, s_lo * 0.98, s_lo - 0.002, 0.25 * s_lo,
                           s_hi, s_hi * 1.02, s_hi + 0.002,
                           s_hi + 0.5 * (0.5 - s_hi), 0.49};
  for (double f : probes) {
    if (f <= 0.0 || f >= 0.5) continue;
    if (f > s_lo && f < s_hi) continue;
    worst = std::max(worst, filter_response_db(out.h, f * fs, fs));
  }
  // Dense sweep of both stop bands.
  for (int i = 0; i <= 400; ++i) {
    const double f1 = s_lo * i / 400.0;
    const double f2 = s_hi + (0.5 - s_hi) * i / 400.0;
    worst = std::max(worst, filter_response_db(out.h, f1 * fs, fs));
    worst = std::max(worst, filter_response_db(out.h, f2 * fs, fs));
  }
  if (worst > -spec.stop_atten_db) {
    std::ostringstream os;
    os << "design_bandpass: requested " << spec.stop_atten_db
       << " dB stop-band rejection but the " << n << "-tap design reaches only "
       << -worst << " dB; widen the transition or raise the tap count";
    throw std::runtime_error(os.str());
  }
  return out;
}

PcmStream apply_filter(const PcmStream& in, const FirFilter& f) {
  const int d = f.group_delay();
  const auto& x = in.samples;
  const int len = static_cast<int>(x.size());
  PcmStream out;
  out.rate_hz = in.rate_hz;
  out.samples.assign(len, 0.0);
  if (len == 0) return out;

  // y[k] pairs taps symmetric about the center, which both halves the
  // multiplies and realises the group-delay alignment: output k depends on
  // x[k-d .. k+d] and carries the same timestamp as input k.
  const double* h = f.h.data();
  const double hc = h[d];
  for (int k = 0; k < len; ++k) {
    double acc = hc * x[k];
    const int reach = std::min({d, k, len - 1 - k});
    for (int m = 1; m <= reach; ++m) acc += h[d - m] * (x[k - m] + x[k + m]);
    // Edge samples: one-sided remainder (zero padded outside the stream).
    if (reach < d) {
      for (int m = reach + 1; m <= d; ++m) {
        const int il = k - m, ir = k + m;
        double s = 0;
        if (il >= 0) s += x[il];
        if (ir < len) s += x[ir];
        acc += h[d - m] * s;
      }
    }
    out.samples[k] = acc;
  }
  return out;
}

void write_taps(const std::string& path, const FirFilter& f) {
  std::ofstream o(path, std::ios::binary);
  if (!o) throw std::runtime_error("write_taps: cannot open " + path);
  o << "# symmetric FIR, rate_hz=" << format_number(f.spec.rate_hz)
    << " center_hz=" << format_number(f.spec.center_hz)
    << " pass_band_hz=" << format_number(f.spec.pass_band_hz) << "\n";
  for (double v : f.h) o << format_number(v) << "\n";
}

}  // namespace doploc
