#pragma once

// Waveform -> log-frequency spectrogram pipeline:
//   resample to 11025 Hz, fit to 66302 samples, Hann STFT (window 1022,
//   hop 256, no padding) giving 512 x 256 magnitudes, remap onto 256
//   log-spaced bins, log1p, per-clip standardization.

#include <cstddef>
#include <filesystem>
#include <vector>

#include "vlsa/matrix.hpp"

namespace vlsa::audio {

inline constexpr int kWindowLength = 1022;
inline constexpr int kHopLength = 256;
inline constexpr int kFrequencyRows = kWindowLength / 2 + 1;  // 512
inline constexpr double kDefaultSampleRate = 11025.0;
inline constexpr double kDefaultMinFrequency = 30.0;
inline constexpr int kDefaultLogBins = 256;
inline constexpr int kDefaultFrames = 256;
// Length giving exactly kDefaultFrames frames: 1022 + 255 * 256.
inline constexpr std::size_t kClipSamples = kWindowLength + (kDefaultFrames - 1) * kHopLength;

struct Waveform {
  std::vector<double> samples;
  double sample_rate = kDefaultSampleRate;
};

enum class FrequencyScale { linear, log };

struct Spectrogram {
  Matrix values;  // time x frequency
  FrequencyScale scale = FrequencyScale::log;
  // Set when the clip had (near) zero variance and was mapped to all zeros.
  bool degenerate = false;
};

// Linear interpolation; output length round(len * target / source).
Waveform resample(const Waveform& w, double target_rate);

// Center-crops or loop-pads to exactly `length` samples.
Waveform fit_length(const Waveform& w, std::size_t length = kClipSamples);

std::size_t stft_frame_count(std::size_t length);
std::vector<double> hann_window(int length = kWindowLength);

// 512 x n_frames magnitudes of the Hann-windowed 1022-point transform.
Matrix stft_magnitude(const Waveform& w);

// Frequency remap before any amplitude compression: `spec` is 512 x n,
// result is n x log_bins (time-major). Positively homogeneous in `spec`.
Matrix log_frequency_remap(const Matrix& spec, double sample_rate = kDefaultSampleRate,
                           int log_bins = kDefaultLogBins, double min_frequency = kDefaultMinFrequency);

// Remap, log1p, per-clip standardization. Requires n == expected_frames.
Spectrogram to_log_frequency(const Matrix& spec, double sample_rate = kDefaultSampleRate,
                             int expected_frames = kDefaultFrames, int log_bins = kDefaultLogBins,
                             double min_frequency = kDefaultMinFrequency);

// Full pipeline from an arbitrary-rate waveform.
Spectrogram waveform_to_spectrogram(const Waveform& w, double target_rate = kDefaultSampleRate);

// Headerless little-endian float32 samples.
Waveform load_waveform(const std::filesystem::path& path, double sample_rate);
void save_waveform(const std::filesystem::path& path, const Waveform& w);
// Writes a single audio array block (see array_io.hpp).
void save_spectrogram(const std::filesystem::path& path, const Spectrogram& s);

}  // namespace vlsa::audio
