#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "test_util.hpp"
#include "vlsa/error.hpp"
#include "vlsa/rng.hpp"
#include "vlsa/audio_frontend.hpp"

using namespace vlsa;
using namespace vlsa::audio;

namespace {

Waveform sine(double freq, double rate, std::size_t n, double amplitude = 1.0) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / rate);
  return w;
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Log-bin interpolation weights written out directly: weights[j] maps source
// bin -> weight.
std::vector<std::vector<std::pair<int, double>>> interpolation_weights(double rate, int bins, double fmin) {
  std::vector<std::vector<std::pair<int, double>>> out(static_cast<std::size_t>(bins));
  const double nyq = rate / 2.0;
  for (int j = 0; j < bins; ++j) {
    const double f = fmin * std::exp(std::log(nyq / fmin) * j / (bins - 1.0));
    double pos = f * 1022.0 / rate;
    if (pos > 511.0) pos = 511.0;
    const int lo = static_cast<int>(pos);
    const double frac = pos - lo;
    out[static_cast<std::size_t>(j)].push_back({lo, 1.0 - frac});
    if (lo + 1 <= 511) out[static_cast<std::size_t>(j)].push_back({lo + 1, frac});
  }
  return out;
}

}  // namespace

TEST_CASE("resample keeps a constant signal constant") {
  Waveform w;
  w.sample_rate = 44100.0;
  w.samples.assign(1000, 0.5);
  const Waveform out = resample(w, 11025.0);
  CHECK(out.sample_rate == 11025.0);
  CHECK(out.samples.size() == 250);
  for (double v : out.samples) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("resample to the same rate is the identity") {
  const Waveform w = sine(440.0, 11025.0, 777);
  CHECK(resample(w, 11025.0).samples == w.samples);
}

TEST_CASE("resample output length rounds") {
  Waveform w;
  w.sample_rate = 3.0;
  w.samples.assign(10, 1.0);
  CHECK(resample(w, 2.0).samples.size() == 7);  // round(6.67)
  CHECK_THROWS_AS(resample(Waveform{}, 2.0), ValidationError);
  CHECK_THROWS_AS(resample(w, 0.0), ValidationError);
}

TEST_CASE("downsampled 100 Hz sine keeps its dominant frequency") {
  // 0.4 s at 22050 Hz becomes 4410 samples at 11025 Hz: 2.5 Hz per bin.
  const Waveform out = resample(sine(100.0, 22050.0, 8820), 11025.0);
  REQUIRE(out.samples.size() == 4410);
  const auto mag = oracle::dft_magnitude(out.samples);
  const double hz_per_bin = 11025.0 / 4410.0;
  CHECK(static_cast<double>(argmax(mag)) * hz_per_bin == doctest::Approx(100.0));
}

TEST_CASE("frame count follows the closed form") {
  CHECK(stft_frame_count(66302) == 256);
  CHECK(kClipSamples == 66302);
  CHECK(stft_frame_count(1022) == 1);
  CHECK(stft_frame_count(1021) == 0);
  CounterRng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t len = 1022 + rng.below(4000);
    Waveform w;
    w.samples.assign(len, 0.0);
    const Matrix m = stft_magnitude(w);
    CHECK(m.rows() == 512);
    CHECK(static_cast<std::size_t>(m.cols()) == (len - 1022) / 256 + 1);
  }
}

TEST_CASE("short waveform names the required length") {
  Waveform w;
  w.samples.assign(1000, 0.0);
  CHECK_THROWS_WITH_AS(stft_magnitude(w), doctest::Contains("1022"), ValidationError);
}

TEST_CASE("zero waveform gives zero magnitudes") {
  Waveform w;
  w.samples.assign(2000, 0.0);
  CHECK(stft_magnitude(w).isZero(0.0));
}

TEST_CASE("stft matches a direct DFT and concentrates a bin-centred sine") {
  const int bin = 100;
  const Waveform w = sine(bin * 11025.0 / 1022.0, 11025.0, 1022 + 4 * 256);
  const Matrix mag = stft_magnitude(w);
  REQUIRE(mag.cols() == 5);
  CHECK((mag.array() >= 0.0).all());
  for (Eigen::Index f = 0; f < mag.cols(); ++f) {
    std::vector<double> frame(1022);
    for (int i = 0; i < 1022; ++i) {
      const double hann = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / 1022.0));
      frame[static_cast<std::size_t>(i)] = hann * w.samples[static_cast<std::size_t>(f * 256 + i)];
    }
    const auto expected = oracle::dft_magnitude(frame);
    REQUIRE(expected.size() == 512);
    double total = 0.0, near = 0.0, max_diff = 0.0;
    for (int k = 0; k < 512; ++k) {
      const double e = expected[static_cast<std::size_t>(k)];
      total += e * e;
      if (std::abs(k - bin) <= 1) near += e * e;
      max_diff = std::max(max_diff, std::abs(mag(k, f) - e));
    }
    CHECK(max_diff < 1e-8);
    CHECK(near / total >= 0.9);
  }
}

TEST_CASE("log frequency remap matches explicit interpolation weights") {
  CounterRng rng(3);
  Matrix spec(512, 4);
  for (Eigen::Index i = 0; i < spec.size(); ++i) spec.data()[i] = rng.uniform();
  const Matrix out = log_frequency_remap(spec);
  REQUIRE(out.rows() == 4);
  REQUIRE(out.cols() == 256);
  const auto weights = interpolation_weights(11025.0, 256, 30.0);
  double max_diff = 0.0;
  for (Eigen::Index t = 0; t < 4; ++t)
    for (int j = 0; j < 256; ++j) {
      double v = 0.0;
      for (auto [k, wgt] : weights[static_cast<std::size_t>(j)]) v += wgt * spec(k, t);
      max_diff = std::max(max_diff, std::abs(v - out(t, j)));
    }
  CHECK(max_diff < 1e-12);
}

TEST_CASE("impulse in the lowest touched source bin lands in the lowest log bins") {
  const auto weights = interpolation_weights(11025.0, 256, 30.0);
  const int lowest = weights[0][0].first;
  Matrix spec = Matrix::Zero(512, 1);
  spec(lowest, 0) = 1.0;
  const Matrix out = log_frequency_remap(spec);
  int last_nonzero = -1;
  for (int j = 0; j < 256; ++j) {
    double expected = 0.0;
    for (auto [k, wgt] : weights[static_cast<std::size_t>(j)])
      if (k == lowest) expected += wgt;
    CHECK(out(0, j) == doctest::Approx(expected).epsilon(1e-12));
    if (out(0, j) != 0.0) last_nonzero = j;
  }
  CHECK(out(0, 0) > 0.0);
  CHECK(last_nonzero >= 0);
  CHECK(last_nonzero < 32);
}

TEST_CASE("log frequency remap is positively homogeneous") {
  CounterRng rng(8);
  Matrix spec(512, 3);
  for (Eigen::Index i = 0; i < spec.size(); ++i) spec.data()[i] = rng.uniform(0.0, 5.0);
  for (double alpha : {0.25, 3.0, 1e3}) {
    const Matrix a = log_frequency_remap(alpha * spec);
    const Matrix b = alpha * log_frequency_remap(spec);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12 * b.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("to_log_frequency standardizes and flags degenerate input") {
  const Spectrogram zero = to_log_frequency(Matrix::Zero(512, 256));
  CHECK(zero.degenerate);
  CHECK(zero.values.isZero(0.0));
  CHECK(zero.values.rows() == 256);
  CHECK(zero.values.cols() == 256);

  const Spectrogram s = waveform_to_spectrogram(sine(700.0, 22050.0, 50000));
  CHECK_FALSE(s.degenerate);
  REQUIRE(s.values.rows() == 256);
  REQUIRE(s.values.cols() == 256);
  const double mean = s.values.mean();
  const double sd = std::sqrt((s.values.array() - mean).square().mean());
  CHECK(std::abs(mean) < 1e-5);
  CHECK(std::abs(sd - 1.0) < 1e-5);

  Matrix bad = Matrix::Zero(512, 256);
  bad(3, 4) = std::nan("");
  CHECK_THROWS_AS(to_log_frequency(bad), ValidationError);
  CHECK_THROWS_AS(to_log_frequency(Matrix::Zero(512, 100)), ValidationError);
}

TEST_CASE("fit_length crops the centre and loops short clips") {
  Waveform w;
  w.samples = {1, 2, 3, 4, 5};
  CHECK(fit_length(w, 3).samples == std::vector<double>{2, 3, 4});
  CHECK(fit_length(w, 7).samples == std::vector<double>{1, 2, 3, 4, 5, 1, 2});
}

TEST_CASE("waveform files round trip through float32") {
  testutil::TempDir dir;
  Waveform w;
  w.sample_rate = 8000.0;
  w.samples = {0.0, 0.5, -0.25, 1.0};
  save_waveform(dir / "a.f32", w);
  const Waveform back = load_waveform(dir / "a.f32", 8000.0);
  CHECK(back.samples == w.samples);
  CHECK(std::filesystem::file_size(dir / "a.f32") == 16);
  CHECK_THROWS_AS(load_waveform(dir / "missing.f32", 8000.0), IoError);
}
