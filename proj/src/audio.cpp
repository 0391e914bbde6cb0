#include "echonav/audio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <mutex>

#include <fftw3.h>
#include <json.hpp>

#include "echonav/bands.hpp"
#include "echonav/errors.hpp"
#include "echonav/random.hpp"
#include "echonav/sh.hpp"

namespace echonav {

namespace {

// FFTW planning is not thread-safe; execution with distinct buffers is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a > kPi) a -= 2.0 * kPi;
  if (a < -kPi) a += 2.0 * kPi;
  return a;
}

/// Woodworth path delay from the head center to an ear for a far source at angle psi from the
/// ear axis, shifted by r/c * pi/2 so it is never negative.
double ear_delay_seconds(double psi, double c) {
  const double base = psi <= kPi / 2 ? -std::cos(psi) : psi - kPi / 2;
  return (kHeadRadius / c) * (base + kPi / 2);
}

struct SpeakerTap {
  std::array<double, kShChannels> decode{};
  std::array<std::size_t, 2> delay{};  // left, right
  std::array<double, 2> gain{};
};

std::array<SpeakerTap, kVirtualSpeakers> speaker_layout(double fs, double c) {
  // Max-rE weights for 2nd-order horizontal decoding: cos(m * pi / 6).
  const double g1 = std::cos(kPi / 6.0);
  const double g2 = std::cos(kPi / 3.0);
  std::array<SpeakerTap, kVirtualSpeakers> taps;
  for (int k = 0; k < kVirtualSpeakers; ++k) {
    const double phi = 2.0 * kPi * k / kVirtualSpeakers;
    SpeakerTap& t = taps[k];
    const double w = 1.0 / kVirtualSpeakers;
    t.decode[0] = w;
    t.decode[1] = w * 2.0 * g1 * std::sin(phi);
    t.decode[3] = w * 2.0 * g1 * std::cos(phi);
    // SN3D V/U on the horizon are (sqrt3/2) sin/cos(2 phi); 4/sqrt3 undoes that factor and adds 2.
    t.decode[4] = w * (4.0 / std::sqrt(3.0)) * g2 * std::sin(2.0 * phi);
    t.decode[8] = w * (4.0 / std::sqrt(3.0)) * g2 * std::cos(2.0 * phi);
    const double ears[2] = {kPi / 2, -kPi / 2};
    for (int e = 0; e < 2; ++e) {
      const double psi = std::abs(wrap_angle(phi - ears[e]));
      t.delay[e] = static_cast<std::size_t>(std::lround(ear_delay_seconds(psi, c) * fs));
      t.gain[e] = std::sqrt(1.0 + 0.6 * std::cos(psi));
    }
  }
  // Normalize so a unit omni impulse yields unit energy at each ear.
  std::size_t max_delay = 0;
  for (const auto& t : taps) max_delay = std::max({max_delay, t.delay[0], t.delay[1]});
  std::vector<double> h(max_delay + 1, 0.0);
  for (const auto& t : taps) h[t.delay[0]] += t.decode[0] * t.gain[0];
  double e = 0.0;
  for (double v : h) e += v * v;
  const double norm = 1.0 / std::sqrt(e);
  for (auto& t : taps)
    for (double& g : t.gain) g *= norm;
  return taps;
}

bool finite_all(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

BinauralIR decode_binaural(const AmbisonicIR& ir, double heading) {
  if (ir.samples.empty() || ir.samples.size() % kShChannels != 0)
    throw ValidationError("decode_binaural: IR must hold whole 9-channel frames");
  if (!std::isfinite(heading)) throw ValidationError("decode_binaural: heading must be finite");
  constexpr double kSpeedOfSound = 343.0;
  const auto taps = speaker_layout(ir.sample_rate, kSpeedOfSound);
  std::size_t max_delay = 0;
  for (const auto& t : taps) max_delay = std::max({max_delay, t.delay[0], t.delay[1]});

  const std::size_t n = ir.length();
  BinauralIR out;
  out.sample_rate = ir.sample_rate;
  out.heading = heading;
  out.left.assign(n + max_delay, 0.0);
  out.right.assign(n + max_delay, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    ShArray a;
    for (int ch = 0; ch < kShChannels; ++ch) a[ch] = ir.samples[i * kShChannels + ch];
    a = sh_rotate_z(a, -heading);
    for (const SpeakerTap& t : taps) {
      double s = 0.0;
      for (int ch = 0; ch < kShChannels; ++ch) s += t.decode[ch] * a[ch];
      if (s == 0.0) continue;
      out.left[i + t.delay[0]] += t.gain[0] * s;
      out.right[i + t.delay[1]] += t.gain[1] * s;
    }
  }
  return out;
}

std::vector<double> convolve(const std::vector<double>& a, const std::vector<double>& b, std::size_t n) {
  std::vector<double> out(n, 0.0);
  if (a.empty() || b.empty() || n == 0) return out;
  const std::size_t na = std::min(a.size(), n), nb = std::min(b.size(), n);
  const std::size_t size = next_pow2(na + nb - 1);
  const std::size_t bins = size / 2 + 1;
  double* x = fftw_alloc_real(size);
  double* y = fftw_alloc_real(size);
  fftw_complex* fx = fftw_alloc_complex(bins);
  fftw_complex* fy = fftw_alloc_complex(bins);
  fftw_plan px, py, inv;
  {
    std::lock_guard lock(fftw_planner_mutex());
    px = fftw_plan_dft_r2c_1d(static_cast<int>(size), x, fx, FFTW_ESTIMATE);
    py = fftw_plan_dft_r2c_1d(static_cast<int>(size), y, fy, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(size), fx, x, FFTW_ESTIMATE);
  }
  std::fill(x, x + size, 0.0);
  std::fill(y, y + size, 0.0);
  std::copy(a.begin(), a.begin() + na, x);
  std::copy(b.begin(), b.begin() + nb, y);
  fftw_execute(px);
  fftw_execute(py);
  for (std::size_t k = 0; k < bins; ++k) {
    const double re = fx[k][0] * fy[k][0] - fx[k][1] * fy[k][1];
    const double im = fx[k][0] * fy[k][1] + fx[k][1] * fy[k][0];
    fx[k][0] = re;
    fx[k][1] = im;
  }
  fftw_execute(inv);
  const std::size_t m = std::min(n, na + nb - 1);
  for (std::size_t i = 0; i < m; ++i) out[i] = x[i] / static_cast<double>(size);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(px);
    fftw_destroy_plan(py);
    fftw_destroy_plan(inv);
  }
  fftw_free(x);
  fftw_free(y);
  fftw_free(fx);
  fftw_free(fy);
  return out;
}

StereoAudio render_audio(const BinauralIR& ir, const SourceWaveform& source, double duration_ms) {
  if (std::lround(ir.sample_rate) != std::lround(source.sample_rate))
    throw ValidationError("render_audio: IR and source sample rates differ");
  if (!(duration_ms > 0.0)) throw ValidationError("render_audio: duration must be positive");
  if (ir.left.size() != ir.right.size()) throw ValidationError("render_audio: ear lengths differ");
  const auto n = static_cast<std::size_t>(std::lround(duration_ms * 1e-3 * ir.sample_rate));
  StereoAudio out;
  out.sample_rate = ir.sample_rate;
  out.left = convolve(ir.left, source.samples, n);
  out.right = convolve(ir.right, source.samples, n);
  return out;
}

Spectrogram spectrogram(const StereoAudio& audio) {
  const auto expected = static_cast<std::size_t>(std::lround(audio.sample_rate));
  if (audio.left.size() != audio.right.size()) throw ValidationError("spectrogram: channel lengths differ");
  if (audio.length() != expected)
    throw ValidationError("spectrogram: expected exactly 1000 ms (" + std::to_string(expected) + " samples), got " +
                          std::to_string(audio.length()));
  const int half = kStftWindow / 2;
  const int frames = std::min<int>(1 + static_cast<int>(audio.length()) / kStftHop, kMaxStftFrames);
  const int bins = kStftWindow / 2 + 1;
  Spectrogram s;
  s.freq = (bins + kSpectrogramDecimation - 1) / kSpectrogramDecimation;
  s.time = (frames + kSpectrogramDecimation - 1) / kSpectrogramDecimation;
  s.channels = 2;
  s.data.assign(static_cast<std::size_t>(s.freq) * s.time * s.channels, 0.0f);

  std::vector<double> window(kStftWindow);
  for (int i = 0; i < kStftWindow; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / kStftWindow);
  double* frame = fftw_alloc_real(kStftWindow);
  fftw_complex* spec = fftw_alloc_complex(bins);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(kStftWindow, frame, spec, FFTW_ESTIMATE);
  }
  const long len = static_cast<long>(audio.length());
  for (int c = 0; c < 2; ++c) {
    const std::vector<double>& x = c == 0 ? audio.left : audio.right;
    for (int t = 0; t < s.time; ++t) {
      const long start = static_cast<long>(t) * kSpectrogramDecimation * kStftHop - half;
      for (int i = 0; i < kStftWindow; ++i) {
        const long j = start + i;  // zero padding outside the signal
        frame[i] = (j >= 0 && j < len) ? x[j] * window[i] : 0.0;
      }
      fftw_execute(plan);
      for (int f = 0; f < s.freq; ++f) {
        const int k = f * kSpectrogramDecimation;
        const double mag = std::hypot(spec[k][0], spec[k][1]);
        s.data[(static_cast<std::size_t>(f) * s.time + t) * 2 + c] = static_cast<float>(std::log(mag + kSpectrogramEps));
      }
    }
  }
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(frame);
  fftw_free(spec);
  return s;
}

std::pair<double, double> rms_intensity(const StereoAudio& audio) {
  auto rms = [](const std::vector<double>& x) {
    if (x.empty()) throw ValidationError("rms_intensity: empty channel");
    double acc = 0.0;
    for (double v : x) acc += v * v;
    return std::sqrt(acc / static_cast<double>(x.size()));
  };
  return {rms(audio.left), rms(audio.right)};
}

StereoAudio add_mic_noise(const StereoAudio& audio, double snr_db, std::uint64_t seed) {
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
    throw ValidationError("add_mic_noise: SNR must be finite or +inf");
  if (snr_db == std::numeric_limits<double>::infinity()) return audio;
  double power = 0.0;
  for (double v : audio.left) power += v * v;
  for (double v : audio.right) power += v * v;
  const std::size_t count = audio.left.size() + audio.right.size();
  if (count == 0 || !(power > 0.0)) throw ValidationError("add_mic_noise: signal has zero power, SNR undefined");
  power /= static_cast<double>(count);
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  Rng rng(seed);
  StereoAudio out = audio;
  for (double& v : out.left) v += sigma * rng.normal();
  for (double& v : out.right) v += sigma * rng.normal();
  return out;
}

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}
void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}
std::uint32_t get_u32(const unsigned char* p) { return p[0] | (p[1] << 8) | (p[2] << 16) | (std::uint32_t(p[3]) << 24); }
std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

}  // namespace

void write_wav(const std::filesystem::path& path, const StereoAudio& audio) {
  if (audio.left.size() != audio.right.size()) throw ValidationError("write_wav: channel lengths differ");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw StorageError("cannot write " + path.string());
  const auto frames = static_cast<std::uint32_t>(audio.length());
  const std::uint32_t data_bytes = frames * 8;
  const auto fs = static_cast<std::uint32_t>(std::lround(audio.sample_rate));
  os.write("RIFF", 4);
  put_u32(os, 4 + (8 + 18) + (8 + 4) + (8 + data_bytes));
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  put_u32(os, 18);
  put_u16(os, 3);  // IEEE float
  put_u16(os, 2);
  put_u32(os, fs);
  put_u32(os, fs * 8);
  put_u16(os, 8);
  put_u16(os, 32);
  put_u16(os, 0);
  os.write("fact", 4);
  put_u32(os, 4);
  put_u32(os, frames);
  os.write("data", 4);
  put_u32(os, data_bytes);
  for (std::uint32_t i = 0; i < frames; ++i) {
    for (double v : {audio.left[i], audio.right[i]}) {
      const auto f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(os, bits);
    }
  }
  if (!os) throw StorageError("write failed for " + path.string());
}

StereoAudio read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::vector<unsigned char> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0)
    throw ParseError(path.string() + ": not a RIFF/WAVE file");
  StereoAudio out;
  bool have_fmt = false;
  std::size_t p = 12;
  while (p + 8 <= b.size()) {
    const std::uint32_t size = get_u32(&b[p + 4]);
    const std::size_t body = p + 8;
    if (body + size > b.size()) throw ParseError(path.string() + ": truncated chunk");
    if (std::memcmp(&b[p], "fmt ", 4) == 0) {
      if (size < 16 || get_u16(&b[body]) != 3 || get_u16(&b[body + 2]) != 2 || get_u16(&b[body + 14]) != 32)
        throw ParseError(path.string() + ": only 2-channel float32 WAV is supported");
      out.sample_rate = get_u32(&b[body + 4]);
      have_fmt = true;
    } else if (std::memcmp(&b[p], "data", 4) == 0) {
      if (!have_fmt) throw ParseError(path.string() + ": data before fmt");
      const std::size_t frames = size / 8;
      out.left.resize(frames);
      out.right.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        float l, r;
        const std::uint32_t lb = get_u32(&b[body + 8 * i]), rb = get_u32(&b[body + 8 * i + 4]);
        std::memcpy(&l, &lb, 4);
        std::memcpy(&r, &rb, 4);
        out.left[i] = l;
        out.right[i] = r;
      }
      return out;
    }
    p = body + size + (size & 1);
  }
  throw ParseError(path.string() + ": no data chunk");
}

// ---- synthetic sources

namespace {

struct CategoryInfo {
  const char* name;
  int count;
};
constexpr CategoryInfo kCategories[] = {{"ring", 26}, {"noise_burst", 26}, {"chirp", 25}, {"music", 25}};

double param(const WaveformSpec& spec, const std::string& key) {
  for (const auto& [k, v] : spec.params)
    if (k == key) return v;
  throw ValidationError("waveform " + spec.id + " lacks parameter " + key);
}

std::vector<std::pair<std::string, double>> sorted(std::vector<std::pair<std::string, double>> p) {
  std::sort(p.begin(), p.end());
  return p;
}

std::vector<std::pair<std::string, double>> draw_params(const std::string& category, Rng& rng) {
  auto u = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
  if (category == "ring") {
    const double f1 = u(350.0, 700.0);
    return sorted({{"f1", f1}, {"f2", f1 * u(1.15, 1.6)}, {"on", u(0.15, 0.4)}, {"off", u(0.05, 0.25)}});
  }
  if (category == "noise_burst") {
    const double lo = u(150.0, 1500.0);
    return sorted({{"f_lo", lo},
                   {"f_hi", std::min(lo * u(2.0, 8.0), 12000.0)},
                   {"burst", u(0.05, 0.3)},
                   {"gap", u(0.02, 0.2)},
                   {"noise_seed", static_cast<double>(rng.below(1u << 31))}});
  }
  if (category == "chirp") {
    const double f0 = u(100.0, 800.0);
    return sorted({{"f0", f0}, {"f1", f0 * u(3.0, 12.0)}, {"period", u(0.2, 0.8)}});
  }
  return sorted({{"root", u(110.0, 440.0)},
                 {"tempo", u(90.0, 180.0)},
                 {"harmonics", static_cast<double>(2 + rng.below(5))},
                 {"pattern_seed", static_cast<double>(rng.below(1u << 31))}});
}

}  // namespace

std::vector<WaveformSpec> waveform_catalog(std::uint64_t seed) {
  std::vector<WaveformSpec> out;
  for (const auto& cat : kCategories) {
    for (int i = 0; i < cat.count; ++i) {
      WaveformSpec spec;
      char id[32];
      std::snprintf(id, sizeof id, "%s_%02d", cat.name, i);
      spec.id = id;
      spec.category = cat.name;
      Rng rng(derive_seed(seed, {0x77617665, out.size()}));
      spec.params = draw_params(spec.category, rng);
      out.push_back(std::move(spec));
    }
  }
  // Seeded shuffle decides split membership; the catalog itself stays in category order.
  std::vector<std::size_t> order(out.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, {0x73706c6974}));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  for (std::size_t r = 0; r < order.size(); ++r)
    out[order[r]].split = r < kTrainWaveforms ? "train" : r < kTrainWaveforms + kValWaveforms ? "val" : "test";
  return out;
}

SourceWaveform generate_waveform(const WaveformSpec& spec, double sample_rate, double seconds) {
  if (!(sample_rate > 0.0) || !(seconds > 0.0)) throw ValidationError("generate_waveform: bad rate or duration");
  const auto n = static_cast<std::size_t>(std::lround(sample_rate * seconds));
  SourceWaveform w;
  w.id = spec.id;
  w.category = spec.category;
  w.split = spec.split;
  w.sample_rate = sample_rate;
  w.samples.assign(n, 0.0);
  auto& x = w.samples;
  const double nyq = 0.45 * sample_rate;

  if (spec.category == "ring") {
    const double f1 = std::min(param(spec, "f1"), nyq), f2 = std::min(param(spec, "f2"), nyq);
    const double on = param(spec, "on"), cycle = on + param(spec, "off");
    for (std::size_t i = 0; i < n; ++i) {
      const double t = i / sample_rate;
      if (std::fmod(t, cycle) < on) x[i] = std::sin(2 * kPi * f1 * t) + std::sin(2 * kPi * f2 * t);
    }
  } else if (spec.category == "noise_burst") {
    Rng rng(static_cast<std::uint64_t>(param(spec, "noise_seed")));
    std::vector<double> noise(n);
    for (double& v : noise) v = rng.normal();
    const double lo = param(spec, "f_lo"), hi = std::min(param(spec, "f_hi"), nyq);
    if (lo < hi) {
      filter_zero_phase(butterworth_highpass(4, lo, sample_rate), noise);
      filter_zero_phase(butterworth_lowpass(4, hi, sample_rate), noise);
    }
    const double burst = param(spec, "burst"), cycle = burst + param(spec, "gap");
    for (std::size_t i = 0; i < n; ++i) {
      const double t = std::fmod(i / sample_rate, cycle);
      if (t < burst) x[i] = noise[i] * std::sin(kPi * t / burst);
    }
  } else if (spec.category == "chirp") {
    const double f0 = param(spec, "f0"), f1 = std::min(param(spec, "f1"), nyq), period = param(spec, "period");
    const double k = std::log(f1 / f0) / period;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = std::fmod(i / sample_rate, period);
      // Exponential sweep phase: integral of f0 * exp(k t).
      x[i] = std::sin(2 * kPi * f0 * (std::exp(k * t) - 1.0) / k);
    }
  } else if (spec.category == "music") {
    static constexpr int kPentatonic[] = {0, 2, 4, 7, 9, 12, 14, 16};
    const double root = param(spec, "root"), beat = 60.0 / param(spec, "tempo");
    const int harmonics = static_cast<int>(param(spec, "harmonics"));
    Rng rng(static_cast<std::uint64_t>(param(spec, "pattern_seed")));
    const auto notes = static_cast<std::size_t>(std::ceil(seconds / beat)) + 1;
    for (std::size_t m = 0; m < notes; ++m) {
      const double f = root * std::pow(2.0, kPentatonic[rng.below(8)] / 12.0);
      const auto begin = static_cast<std::size_t>(m * beat * sample_rate);
      for (std::size_t i = begin; i < n && i < begin + static_cast<std::size_t>(beat * sample_rate); ++i) {
        const double t = (i - begin) / sample_rate;
        double v = 0.0;
        for (int h = 1; h <= harmonics; ++h)
          if (h * f < nyq) v += std::sin(2 * kPi * h * f * t) / h;
        x[i] = v * std::exp(-4.0 * t / beat);
      }
    }
  } else {
    throw ValidationError("unknown waveform category " + spec.category);
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  if (!(peak > 0.0) || !finite_all(x)) throw ValidationError("waveform " + spec.id + " rendered silent or non-finite");
  for (double& v : x) v /= peak;
  return w;
}

std::string waveform_manifest_json(const std::vector<WaveformSpec>& catalog) {
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const WaveformSpec& s : catalog) {
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (const auto& [k, v] : s.params) params[k] = v;
    list.push_back({{"id", s.id}, {"category", s.category}, {"split", s.split}, {"params", params}});
  }
  nlohmann::ordered_json root = {{"count", catalog.size()}, {"waveforms", list}};
  return root.dump(2) + "\n";
}

std::vector<WaveformSpec> parse_waveform_manifest(const std::string& json_text) {
  std::vector<WaveformSpec> out;
  try {
    const auto root = nlohmann::json::parse(json_text);
    for (const auto& w : root.at("waveforms")) {
      WaveformSpec s;
      s.id = w.at("id").get<std::string>();
      s.category = w.at("category").get<std::string>();
      s.split = w.at("split").get<std::string>();
      for (const auto& [k, v] : w.at("params").items()) s.params.emplace_back(k, v.get<double>());
      s.params = sorted(std::move(s.params));
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("waveform manifest: ") + e.what());
  }
  return out;
}

}  // namespace echonav
