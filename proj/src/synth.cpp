#include <algorithm>
#include <cmath>

#include "echonav/acoustics.hpp"
#include "echonav/bands.hpp"
#include "echonav/errors.hpp"
#include "echonav/random.hpp"

namespace echonav {

std::vector<double> AmbisonicIR::channel(int ch) const {
  std::vector<double> out(length());
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = samples[n * kShChannels + ch];
  return out;
}

namespace {

/// Rescales band noise so its power over any `window` samples equals its global mean power.
/// Narrow low bands otherwise carry large short-term energy fluctuations into the decay.
void flatten_envelope(std::vector<double>& x, std::size_t window) {
  const std::size_t n = x.size();
  if (n == 0) return;
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];
  const double global = prefix[n] / static_cast<double>(n);
  if (!(global > 0.0)) return;
  const std::size_t half = window / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i > half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    const double local = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
    if (local > 0.0) x[i] *= std::sqrt(global / local);
  }
}

}  // namespace

std::uint64_t pair_noise_seed(const SimParams& params, std::uint32_t source_id, std::uint32_t listener_id) {
  return derive_seed(params.rng_seed, {3, source_id, listener_id});
}

AmbisonicIR histogram_to_pressure(const EnergyHistogram& histogram, const std::vector<ERCluster>& er,
                                  const SimParams& params, std::uint64_t noise_seed) {
  if (histogram.sample_rate() != 0.0 && histogram.sample_rate() != params.sample_rate)
    throw ValidationError("histogram and parameter sample rates differ");
  const double fs = params.sample_rate;
  const BandSplitter splitter(params.band_edges, fs);
  // Zero-phase filters ring on both sides of an impulse; the padding keeps that ringing away
  // from the buffer ends and the tail allowance keeps it inside the output.
  const auto pad = static_cast<std::size_t>(std::ceil(0.1 * fs));
  const auto ring = static_cast<std::size_t>(std::ceil(0.05 * fs));
  const auto max_bins = static_cast<std::size_t>(std::ceil(params.max_ir_seconds * fs));

  std::size_t n_out = histogram.length();
  double direct_delay = -1.0;
  for (const ERCluster& c : er) {
    const auto at = static_cast<std::size_t>(std::max(0.0, std::round(c.delay)));
    n_out = std::max(n_out, at + 1 + ring);
    if (c.order() == 0) direct_delay = c.delay;
  }
  n_out = std::min(n_out, max_bins);

  AmbisonicIR ir;
  ir.sample_rate = fs;
  if (n_out == 0) {
    ir.samples.assign(kShChannels, 0.0f);
    return ir;
  }
  const std::size_t total = n_out + 2 * pad;
  std::vector<std::vector<double>> out(kShChannels, std::vector<double>(n_out, 0.0));

  // Late field: sqrt(energy) envelopes on band-limited white noise, spread over the channels by
  // each bin's energy-normalized SH coefficients.
  if (histogram.length() > 0) {
    Rng rng(noise_seed);
    std::vector<double> white(total);
    for (double& v : white) v = rng.normal();
    auto noise = splitter.split(white);
    for (auto& band : noise) flatten_envelope(band, static_cast<std::size_t>(std::ceil(0.02 * fs)));
    const std::size_t late = std::min(histogram.length(), n_out);
    for (std::size_t n = 0; n < late; ++n) {
      for (int b = 0; b < kBandCount; ++b) {
        const double e = histogram.at(n, b, 0);
        if (!(e > 0.0)) continue;
        const double a = std::sqrt(e) * noise[b][n + pad] / e;
        for (int ch = 0; ch < kShChannels; ++ch) out[ch][n] += a * histogram.at(n, b, ch);
      }
    }
  }

  // Early reflections: per-band impulses with their SH gains, then band-filtered.
  if (!er.empty()) {
    std::vector<std::array<std::vector<double>, kBandCount>> impulses(kShChannels);
    for (auto& bands : impulses)
      for (auto& v : bands) v.assign(total, 0.0);
    for (const ERCluster& c : er) {
      const auto at = static_cast<std::size_t>(std::max(0.0, std::round(c.delay)));
      if (at >= n_out) continue;
      const ShArray y = sh_encode(c.direction);
      for (int b = 0; b < kBandCount; ++b) {
        const double g = std::sqrt(std::max(0.0, c.energy[b]));
        for (int ch = 0; ch < kShChannels; ++ch) impulses[ch][b][pad + at] += g * y[ch];
      }
    }
    for (int ch = 0; ch < kShChannels; ++ch) {
      const std::vector<double> filtered = splitter.combine(std::move(impulses[ch]));
      for (std::size_t n = 0; n < n_out; ++n) out[ch][n] += filtered[pad + n];
    }
  }

  // Trim where the remaining omni energy drops trim_db below the total.
  double energy = 0.0;
  for (double v : out[0]) energy += v * v;
  std::size_t keep = n_out;
  if (energy > 0.0) {
    const double floor = energy * std::pow(10.0, -params.trim_db / 10.0);
    double tail = 0.0;
    keep = 0;
    for (std::size_t n = n_out; n-- > 0;) {
      tail += out[0][n] * out[0][n];
      if (tail > floor) {
        keep = n + 1;
        break;
      }
    }
  }
  if (direct_delay >= 0.0)
    keep = std::max(keep, std::min(n_out, static_cast<std::size_t>(std::round(direct_delay)) + 1));
  keep = std::max<std::size_t>(keep, 1);

  ir.samples.resize(keep * kShChannels);
  for (std::size_t n = 0; n < keep; ++n)
    for (int ch = 0; ch < kShChannels; ++ch) ir.samples[n * kShChannels + ch] = static_cast<float>(out[ch][n]);
  return ir;
}

AmbisonicIR compute_rir_pair_cached(const AcousticScene& scene, const SourcePathCache& cache,
                                    std::uint32_t source_id, const Vec3& listener,
                                    std::uint32_t listener_id, const SimParams& params) {
  const ConnectionResult conn = connect_and_accumulate(scene, listener, listener_id, cache, params);
  const std::vector<ERCluster> clusters = cluster_early_reflections(conn.early, scene);
  AmbisonicIR ir = histogram_to_pressure(conn.histogram, clusters, params,
                                         pair_noise_seed(params, source_id, listener_id));
  ir.source_id = source_id;
  ir.listener_id = listener_id;
  return ir;
}

AmbisonicIR compute_rir_pair(const AcousticScene& scene, const Vec3& source, std::uint32_t source_id,
                             const Vec3& listener, std::uint32_t listener_id, const SimParams& params) {
  params.validate();
  const SourcePathCache cache = trace_source_subpaths(scene, source, source_id, params);
  return compute_rir_pair_cached(scene, cache, source_id, listener, listener_id, params);
}

}  // namespace echonav
