#pragma once

#include <array>
#include <vector>

#include "echonav/materials.hpp"

namespace echonav {

/// Direct-form-II-transposed second-order section, a0 normalized to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
};
using Sos = std::vector<Biquad>;

/// Digital Butterworth sections (bilinear transform, prewarped at fc). `order` must be even.
Sos butterworth_lowpass(int order, double fc, double fs);
Sos butterworth_highpass(int order, double fc, double fs);

/// Causal filtering in place (zero initial state).
void filter_causal(const Sos& sos, std::vector<double>& x);

/// Forward-backward filtering: zero phase, squared magnitude response.
void filter_zero_phase(const Sos& sos, std::vector<double>& x);

/// Four-band crossover tree. Lowpass/highpass pairs of equal-order Butterworth filters run
/// forward-backward sum to unity, so the bands of any signal add back to the signal.
class BandSplitter {
 public:
  static constexpr int kOrder = 4;

  BandSplitter(const std::array<double, kBandCount - 1>& edges, double sample_rate);

  /// Band components of `x`; their sum reproduces `x` (up to rounding).
  std::array<std::vector<double>, kBandCount> split(const std::vector<double>& x) const;

  /// Applies band b's zero-phase filter chain to a[b] and sums the results:
  /// sum_b H_b a_b, evaluated with three nested crossover stages.
  std::vector<double> combine(std::array<std::vector<double>, kBandCount> a) const;

  /// Band b's zero-phase filter applied in place.
  void apply_band(int band, std::vector<double>& x) const;

  double sample_rate() const { return sample_rate_; }

 private:
  std::array<Sos, kBandCount - 1> low_;
  std::array<Sos, kBandCount - 1> high_;
  double sample_rate_;
};

}  // namespace echonav
