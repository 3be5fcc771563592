#include "vlsa/audio_frontend.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "vlsa/array_io.hpp"
#include "vlsa/error.hpp"

namespace vlsa::audio {

Waveform resample(const Waveform& w, double target_rate) {
  if (!(target_rate > 0.0)) throw ValidationError("resample: target rate must be positive");
  if (!(w.sample_rate > 0.0)) throw ValidationError("resample: source rate must be positive");
  if (w.samples.empty()) throw ValidationError("resample: empty waveform");
  if (target_rate == w.sample_rate) return w;
  const auto n_in = w.samples.size();
  const auto n_out = static_cast<std::size_t>(std::llround(static_cast<double>(n_in) * target_rate / w.sample_rate));
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  const double step = w.sample_rate / target_rate;
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * step;
    const auto i0 = static_cast<std::size_t>(pos);
    if (i0 + 1 >= n_in) {
      out.samples[i] = w.samples.back();
      continue;
    }
    const double frac = pos - static_cast<double>(i0);
    out.samples[i] = (1.0 - frac) * w.samples[i0] + frac * w.samples[i0 + 1];
  }
  return out;
}

Waveform fit_length(const Waveform& w, std::size_t length) {
  if (w.samples.empty()) throw ValidationError("fit_length: empty waveform");
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(length);
  const auto n = w.samples.size();
  if (n >= length) {
    const std::size_t start = (n - length) / 2;
    std::copy_n(w.samples.begin() + static_cast<std::ptrdiff_t>(start), length, out.samples.begin());
  } else {
    for (std::size_t i = 0; i < length; ++i) out.samples[i] = w.samples[i % n];
  }
  return out;
}

std::size_t stft_frame_count(std::size_t length) {
  if (length < static_cast<std::size_t>(kWindowLength)) return 0;
  return (length - kWindowLength) / kHopLength + 1;
}

std::vector<double> hann_window(int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int n = 0; n < length; ++n) w[static_cast<std::size_t>(n)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / length);
  return w;
}

namespace {

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

// One r2c plan for the fixed window length; executed with the new-array API so
// concurrent callers only share the read-only plan.
class RealFft {
 public:
  RealFft() {
    std::unique_ptr<double, FftwFree> in(fftw_alloc_real(kWindowLength));
    std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(kFrequencyRows));
    plan_ = fftw_plan_dft_r2c_1d(kWindowLength, in.get(), out.get(), FFTW_ESTIMATE);
    if (!plan_) throw std::runtime_error("fftw plan creation failed");
  }
  ~RealFft() { fftw_destroy_plan(plan_); }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void execute(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(plan_, in, out); }

 private:
  fftw_plan plan_ = nullptr;
};

const RealFft& shared_fft() {
  // fftw planning is not thread-safe; the static initializer serializes it.
  static const RealFft fft;
  return fft;
}

}  // namespace

Matrix stft_magnitude(const Waveform& w) {
  const std::size_t n = w.samples.size();
  if (n < static_cast<std::size_t>(kWindowLength))
    throw ValidationError("stft_magnitude: need at least " + std::to_string(kWindowLength) + " samples, got " +
                          std::to_string(n));
  for (double v : w.samples) {
    if (!std::isfinite(v)) throw ValidationError("stft_magnitude: non-finite sample");
  }
  const std::size_t frames = stft_frame_count(n);
  const std::vector<double> window = hann_window();
  const RealFft& fft = shared_fft();
  std::unique_ptr<double, FftwFree> in(fftw_alloc_real(kWindowLength));
  std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(kFrequencyRows));
  Matrix mag(kFrequencyRows, static_cast<Eigen::Index>(frames));
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t start = f * kHopLength;
    for (int i = 0; i < kWindowLength; ++i) in.get()[i] = w.samples[start + static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
    fft.execute(in.get(), out.get());
    for (int k = 0; k < kFrequencyRows; ++k) {
      mag(k, static_cast<Eigen::Index>(f)) = std::hypot(out.get()[k][0], out.get()[k][1]);
    }
  }
  return mag;
}

Matrix log_frequency_remap(const Matrix& spec, double sample_rate, int log_bins, double min_frequency) {
  if (spec.rows() != kFrequencyRows)
    throw ValidationError("log_frequency_remap: expected " + std::to_string(kFrequencyRows) + " frequency rows, got " +
                          std::to_string(spec.rows()));
  if (!spec.allFinite()) throw ValidationError("log_frequency_remap: non-finite input");
  if (log_bins < 2) throw ValidationError("log_frequency_remap: need at least 2 output bins");
  const double nyquist = sample_rate / 2.0;
  if (!(min_frequency > 0.0) || min_frequency >= nyquist)
    throw ValidationError("log_frequency_remap: minimum frequency must lie in (0, nyquist)");
  const double bin_hz = sample_rate / kWindowLength;
  Matrix out(spec.cols(), log_bins);
  for (int j = 0; j < log_bins; ++j) {
    const double freq = min_frequency * std::pow(nyquist / min_frequency, static_cast<double>(j) / (log_bins - 1));
    double pos = std::min(freq / bin_hz, static_cast<double>(kFrequencyRows - 1));
    const auto lo = static_cast<Eigen::Index>(std::floor(pos));
    const Eigen::Index hi = std::min<Eigen::Index>(lo + 1, kFrequencyRows - 1);
    const double frac = pos - static_cast<double>(lo);
    out.col(j) = ((1.0 - frac) * spec.row(lo) + frac * spec.row(hi)).transpose();
  }
  return out;
}

Spectrogram to_log_frequency(const Matrix& spec, double sample_rate, int expected_frames, int log_bins,
                             double min_frequency) {
  if (spec.cols() != expected_frames)
    throw ValidationError("to_log_frequency: expected " + std::to_string(expected_frames) + " frames, got " +
                          std::to_string(spec.cols()));
  Spectrogram s;
  s.scale = FrequencyScale::log;
  s.values = log_frequency_remap(spec, sample_rate, log_bins, min_frequency);
  s.values = s.values.array().log1p().matrix();
  const double mean = s.values.mean();
  const double var = (s.values.array() - mean).square().mean();
  const double stddev = std::sqrt(var);
  if (stddev < 1e-8) {
    s.values.setZero();
    s.degenerate = true;
  } else {
    s.values = ((s.values.array() - mean) / stddev).matrix();
  }
  return s;
}

Spectrogram waveform_to_spectrogram(const Waveform& w, double target_rate) {
  const Waveform clip = fit_length(resample(w, target_rate));
  return to_log_frequency(stft_magnitude(clip), target_rate);
}

Waveform load_waveform(const std::filesystem::path& path, double sample_rate) {
  if (!(sample_rate > 0.0)) throw ValidationError("sample rate must be positive");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open waveform");
  Waveform w;
  w.sample_rate = sample_rate;
  const std::string src = path.string();
  while (in.peek() != std::char_traits<char>::eof()) {
    const float v = get_f32(in, src);
    if (!std::isfinite(v)) throw IoError(src + ": non-finite sample");
    w.samples.push_back(v);
  }
  if (w.samples.empty()) throw IoError(src + ": empty waveform");
  return w;
}

void save_waveform(const std::filesystem::path& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  for (double v : w.samples) put_f32(out, static_cast<float>(v));
  if (!out) throw IoError(path.string() + ": write failed");
}

void save_spectrogram(const std::filesystem::path& path, const Spectrogram& s) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  std::vector<float> data(static_cast<std::size_t>(s.values.size()));
  for (Eigen::Index i = 0; i < s.values.size(); ++i) data[static_cast<std::size_t>(i)] = static_cast<float>(s.values.data()[i]);
  const std::uint32_t dims[] = {static_cast<std::uint32_t>(s.values.rows()), static_cast<std::uint32_t>(s.values.cols())};
  write_block(out, Modality::audio, dims, std::span<const float>(data));
  if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace vlsa::audio
