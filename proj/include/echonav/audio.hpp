#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "echonav/acoustics.hpp"

namespace echonav {

struct BinauralIR {
  double sample_rate = 44100.0;
  double heading = 0.0;
  std::vector<double> left;
  std::vector<double> right;
  std::size_t length() const { return left.size(); }
};

/// Two-channel audio (also used for rendered binaural signals).
struct StereoAudio {
  double sample_rate = 44100.0;
  std::vector<double> left;
  std::vector<double> right;
  std::size_t length() const { return left.size(); }
};

inline constexpr double kHeadRadius = 0.0875;
inline constexpr int kVirtualSpeakers = 8;

/// Rotates the field into the listener frame (heading = world azimuth of the facing direction,
/// counter-clockwise from +x), decodes to 8 horizontal virtual speakers and applies a
/// spherical-head model per speaker: Woodworth interaural delays rounded to whole samples and a
/// broadband gain sqrt(1 + 0.6 cos psi) where psi is the speaker-to-ear angle. The overall gain is
/// chosen so an omni-only IR keeps its energy at each ear.
BinauralIR decode_binaural(const AmbisonicIR& ir, double heading);

struct SourceWaveform {
  std::string id;
  std::string category;
  std::string split;  // train / val / test
  double sample_rate = 44100.0;
  std::vector<double> samples;
};

/// Linear convolution of a and b, first `n` output samples (FFT based).
std::vector<double> convolve(const std::vector<double>& a, const std::vector<double>& b, std::size_t n);

/// Convolves the source with both ears and keeps the first duration_ms of output.
StereoAudio render_audio(const BinauralIR& ir, const SourceWaveform& source, double duration_ms = 1000.0);

/// F x T x C log-magnitude tensor, row-major: data[(f * time + t) * channels + c].
struct Spectrogram {
  int freq = 0;
  int time = 0;
  int channels = 2;
  std::vector<float> data;
  float at(int f, int t, int c) const { return data[(static_cast<std::size_t>(f) * time + t) * channels + c]; }
};

inline constexpr int kStftWindow = 512;
inline constexpr int kStftHop = 160;
inline constexpr int kSpectrogramDecimation = 4;
inline constexpr double kSpectrogramEps = 1e-8;
/// Frames kept (before decimation) for 44.1 kHz input.
inline constexpr int kMaxStftFrames = 257;

/// Center-padded Hann STFT (window 512, hop 160) magnitudes, frames cropped to 257, both axes
/// decimated by 4, log(|X| + 1e-8). Input must be exactly one second long.
Spectrogram spectrogram(const StereoAudio& audio);

std::pair<double, double> rms_intensity(const StereoAudio& audio);

/// Adds white Gaussian noise at the given SNR (signal power averaged over both channels).
/// snr_db = +inf returns the input unchanged.
StereoAudio add_mic_noise(const StereoAudio& audio, double snr_db, std::uint64_t seed);

/// PCM float32 WAV, two channels.
void write_wav(const std::filesystem::path& path, const StereoAudio& audio);
StereoAudio read_wav(const std::filesystem::path& path);

// ---- synthetic source sounds

struct WaveformSpec {
  std::string id;
  std::string category;  // ring, noise_burst, chirp, music
  std::string split;
  /// Generator parameters; meaning depends on the category (see waveform_manifest_json).
  std::vector<std::pair<std::string, double>> params;
};

inline constexpr int kWaveformCount = 102;
inline constexpr int kTrainWaveforms = 73;
inline constexpr int kValWaveforms = 11;
inline constexpr int kTestWaveforms = 18;

/// The 102 parameterized variants with their split assignment; deterministic given seed.
std::vector<WaveformSpec> waveform_catalog(std::uint64_t seed = 0);

/// Renders one variant, peak-normalized to 1.
SourceWaveform generate_waveform(const WaveformSpec& spec, double sample_rate, double seconds = 1.0);

std::string waveform_manifest_json(const std::vector<WaveformSpec>& catalog);
std::vector<WaveformSpec> parse_waveform_manifest(const std::string& json_text);

}  // namespace echonav
