#include <doctest.h>

#include <cmath>
#include <complex>

#include "echonav/bands.hpp"
#include "echonav/random.hpp"

using namespace echonav;

namespace {

std::complex<double> response(const Sos& sos, double f, double fs) {
  const std::complex<double> z = std::polar(1.0, -2.0 * kPi * f / fs);  // z^-1
  std::complex<double> h = 1.0;
  for (const Biquad& q : sos) h *= (q.b0 + q.b1 * z + q.b2 * z * z) / (1.0 + q.a1 * z + q.a2 * z * z);
  return h;
}

std::vector<double> white(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (double& v : x) v = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("4th-order Butterworth is -3 dB at the cutoff and flat far from it") {
  for (double fc : {176.0, 775.0, 3409.0}) {
    const Sos lp = butterworth_lowpass(4, fc, 44100), hp = butterworth_highpass(4, fc, 44100);
    CHECK(std::abs(response(lp, fc, 44100)) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
    CHECK(std::abs(response(hp, fc, 44100)) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
    CHECK(std::abs(response(lp, fc / 20, 44100)) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(std::abs(response(hp, std::min(20000.0, fc * 5), 44100)) == doctest::Approx(1.0).epsilon(1e-2));
    // 24 dB/octave roll-off an octave and more past the cutoff.
    CHECK(20 * std::log10(std::abs(response(lp, fc * 4, 44100))) < -40.0);
  }
  CHECK_THROWS(butterworth_lowpass(3, 100, 44100));
  CHECK_THROWS(butterworth_lowpass(4, 30000, 44100));
}

TEST_CASE("zero-phase filtering squares the magnitude and keeps impulses symmetric") {
  const Sos lp = butterworth_lowpass(4, 775, 44100);
  std::vector<double> x(8001, 0.0);
  x[4000] = 1.0;
  filter_zero_phase(lp, x);
  for (int k = 1; k < 2000; ++k) CHECK(x[4000 + k] == doctest::Approx(x[4000 - k]).epsilon(1e-6).scale(1e-12));
  // DC gain of the squared response is 1: the taps sum to 1.
  double sum = 0.0;
  for (double v : x) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("band split sums back to the input") {
  const BandSplitter sp({176, 775, 3409}, 44100);
  const auto x = white(20000, 4);
  const auto bands = sp.split(x);
  for (std::size_t n = 0; n < x.size(); ++n) {
    double s = 0.0;
    for (const auto& b : bands) s += b[n];
    REQUIRE(s == doctest::Approx(x[n]).epsilon(1e-9).scale(1.0));
  }
  for (int b = 0; b < kBandCount; ++b) {
    auto y = x;
    sp.apply_band(b, y);
    for (std::size_t n = 0; n < x.size(); n += 97) CHECK(y[n] == doctest::Approx(bands[b][n]).epsilon(1e-9).scale(1.0));
  }
}

TEST_CASE("combine of equal band impulses preserves energy") {
  const BandSplitter sp({176, 775, 3409}, 44100);
  const std::size_t n = 16384;
  std::array<std::vector<double>, kBandCount> a;
  const double energy = 2.5;
  for (auto& v : a) {
    v.assign(n, 0.0);
    v[n / 2] = std::sqrt(energy);
  }
  const auto out = sp.combine(a);
  double e = 0.0;
  for (double v : out) e += v * v;
  CHECK(e == doctest::Approx(energy).epsilon(0.01));
}

TEST_CASE("band energies of white noise follow the band widths roughly") {
  const BandSplitter sp({176, 775, 3409}, 44100);
  const auto x = white(1 << 16, 8);
  const auto bands = sp.split(x);
  double total = 0.0;
  std::array<double, kBandCount> e{};
  for (int b = 0; b < kBandCount; ++b)
    for (double v : bands[b]) e[b] += v * v;
  for (double v : e) total += v;
  const double widths[4] = {176, 775 - 176, 3409 - 775, 22050 - 3409};
  for (int b = 0; b < kBandCount; ++b) CHECK(e[b] / total == doctest::Approx(widths[b] / 22050).epsilon(0.25));
}
