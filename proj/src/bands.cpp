#include "echonav/bands.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "echonav/geometry.hpp"

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

namespace echonav {

namespace {

Sos butterworth(int order, double fc, double fs, bool highpass) {
  if (order < 2 || order % 2 != 0) throw std::invalid_argument("butterworth: order must be even");
  if (!(fc > 0.0 && fc < 0.5 * fs)) throw std::invalid_argument("butterworth: cutoff outside (0, fs/2)");
  Sos sos;
  const double w0 = 2.0 * kPi * fc / fs;
  const double cw = std::cos(w0);
  const double sw = std::sin(w0);
  for (int k = 0; k < order / 2; ++k) {
    // Pole pair angle from the negative real axis of the analog prototype.
    const double q = 1.0 / (2.0 * std::cos((2 * k + 1) * kPi / (2.0 * order)));
    const double alpha = sw / (2.0 * q);
    const double a0 = 1.0 + alpha;
    Biquad bq;
    if (highpass) {
      bq.b0 = (1.0 + cw) / 2.0 / a0;
      bq.b1 = -(1.0 + cw) / a0;
    } else {
      bq.b0 = (1.0 - cw) / 2.0 / a0;
      bq.b1 = (1.0 - cw) / a0;
    }
    bq.b2 = bq.b0;
    bq.a1 = -2.0 * cw / a0;
    bq.a2 = (1.0 - alpha) / a0;
    sos.push_back(bq);
  }
  return sos;
}

// Decaying IIR ringing reaches subnormal magnitudes, which are very slow on x86; flush them to
// zero while filtering.
class FlushDenormals {
 public:
#if defined(__SSE2__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040); }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

void run(const Biquad& q, double* x, std::size_t n) {
  double z1 = 0.0, z2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double in = x[i];
    const double out = q.b0 * in + z1;
    z1 = q.b1 * in - q.a1 * out + z2;
    z2 = q.b2 * in - q.a2 * out;
    x[i] = out;
  }
}

}  // namespace

Sos butterworth_lowpass(int order, double fc, double fs) { return butterworth(order, fc, fs, false); }
Sos butterworth_highpass(int order, double fc, double fs) { return butterworth(order, fc, fs, true); }

void filter_causal(const Sos& sos, std::vector<double>& x) {
  const FlushDenormals guard;
  for (const Biquad& q : sos) run(q, x.data(), x.size());
}

void filter_zero_phase(const Sos& sos, std::vector<double>& x) {
  // The forward pass rings past the end of x; keep that tail for the backward pass so the
  // result is the zero-phase response of the zero-extended signal.
  double radius = 0.0;
  for (const Biquad& q : sos) radius = std::max(radius, std::sqrt(std::abs(q.a2)));
  const std::size_t n = x.size();
  const std::size_t tail = radius > 0.0 && radius < 1.0
                               ? static_cast<std::size_t>(std::ceil(std::log(1e-16) / std::log(radius)))
                               : 0;
  x.resize(n + tail, 0.0);
  filter_causal(sos, x);
  std::reverse(x.begin(), x.end());
  filter_causal(sos, x);
  std::reverse(x.begin(), x.end());
  x.resize(n);
}

BandSplitter::BandSplitter(const std::array<double, kBandCount - 1>& edges, double sample_rate)
    : sample_rate_(sample_rate) {
  for (int i = 0; i < kBandCount - 1; ++i) {
    if (i > 0 && !(edges[i] > edges[i - 1]))
      throw std::invalid_argument("band edges must be strictly increasing");
    low_[i] = butterworth_lowpass(kOrder, edges[i], sample_rate);
    high_[i] = butterworth_highpass(kOrder, edges[i], sample_rate);
  }
}

std::array<std::vector<double>, kBandCount> BandSplitter::split(const std::vector<double>& x) const {
  std::array<std::vector<double>, kBandCount> out;
  std::vector<double> rest = x;
  for (int i = 0; i < kBandCount - 1; ++i) {
    out[i] = rest;
    filter_zero_phase(low_[i], out[i]);
    filter_zero_phase(high_[i], rest);
  }
  out[kBandCount - 1] = std::move(rest);
  return out;
}

std::vector<double> BandSplitter::combine(std::array<std::vector<double>, kBandCount> a) const {
  // acc = a_3; acc = LP_i a_i + HP_i acc for i = 2, 1, 0.
  std::vector<double> acc = std::move(a[kBandCount - 1]);
  for (int i = kBandCount - 2; i >= 0; --i) {
    filter_zero_phase(high_[i], acc);
    std::vector<double>& lo = a[i];
    if (lo.size() != acc.size()) throw std::invalid_argument("combine: band length mismatch");
    filter_zero_phase(low_[i], lo);
    for (std::size_t n = 0; n < acc.size(); ++n) acc[n] += lo[n];
  }
  return acc;
}

void BandSplitter::apply_band(int band, std::vector<double>& x) const {
  for (int i = 0; i < band && i < kBandCount - 1; ++i) filter_zero_phase(high_[i], x);
  if (band < kBandCount - 1) filter_zero_phase(low_[band], x);
}

}  // namespace echonav
