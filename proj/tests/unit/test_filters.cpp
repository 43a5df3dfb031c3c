#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "oscbp/error.hpp"
#include "oscbp/signal_prep.hpp"

using namespace oscbp;
using namespace oscbp::signal;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> sine(double f, double fs, double seconds, double amp = 1.0) {
  const auto n = static_cast<std::size_t>(seconds * fs);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2 * kPi * f * static_cast<double>(i) / fs);
  return x;
}

double rms_middle(const std::vector<double>& x, std::size_t skip) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = skip; i + skip < x.size(); ++i, ++n) s += x[i] * x[i];
  return std::sqrt(s / static_cast<double>(n));
}

CuffDeflationRecord ramp_record(double fs, double seconds, double from, double to) {
  CuffDeflationRecord r{"S", "R", fs, {}, 120, 80};
  const auto n = static_cast<std::size_t>(seconds * fs);
  for (std::size_t i = 0; i < n; ++i) {
    r.samples.push_back(from + (to - from) * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  return r;
}

}  // namespace

TEST_CASE("butterworth magnitude matches the analytic response") {
  const auto lp = butterworth(4, 10.0, 100.0, FilterKind::LowPass);
  CHECK(lp.size() == 2);
  // Bilinear prewarping: the digital response equals the analog one at the warped frequency.
  auto warped = [](double f, double fs) { return std::tan(kPi * f / fs); };
  for (double f : {0.5, 1.0, 5.0, 10.0, 20.0, 40.0}) {
    const double ratio = warped(f, 100.0) / warped(10.0, 100.0);
    const double analytic = 1.0 / std::sqrt(1.0 + std::pow(ratio, 8));
    CHECK(magnitude_response(lp, f, 100.0) == doctest::Approx(analytic).epsilon(1e-9));
  }
  const auto hp = butterworth(4, 0.3, 100.0, FilterKind::HighPass);
  CHECK(magnitude_response(hp, 0.3, 100.0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-9));
  CHECK(magnitude_response(hp, 0.0, 100.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("odd orders add a first-order section") {
  const auto s = butterworth(3, 5.0, 100.0, FilterKind::LowPass);
  REQUIRE(s.size() == 2);
  CHECK(s.back().b2 == 0.0);
  CHECK(s.back().a2 == 0.0);
  CHECK(magnitude_response(s, 0.0, 100.0) == doctest::Approx(1.0));
}

TEST_CASE("butterworth rejects cutoffs at or above Nyquist") {
  CHECK_THROWS_AS(butterworth(4, 50.0, 100.0, FilterKind::LowPass), Error);
  CHECK_THROWS_AS(butterworth(4, 0.0, 100.0, FilterKind::LowPass), Error);
}

TEST_CASE("split_components: ramp has no pass-band energy") {
  const auto r = ramp_record(100.0, 40.0, 150.0, 50.0);
  const auto omw = split_components(r, 0.3);
  const std::size_t edge = 200;
  for (std::size_t i = edge; i + edge < omw.samples.size(); ++i) {
    REQUIRE(std::abs(omw.samples[i]) < 0.05);
  }
}

TEST_CASE("split_components separates a 1 Hz sinusoid from the ramp") {
  auto r = ramp_record(100.0, 40.0, 150.0, 50.0);
  const auto s = sine(1.0, 100.0, 40.0);
  std::vector<double> ramp = r.samples;
  for (std::size_t i = 0; i < s.size(); ++i) r.samples[i] += s[i];
  const auto omw = split_components(r, 0.3);
  const double amp = rms_middle(omw.samples, 500) * std::sqrt(2.0);
  CHECK(amp == doctest::Approx(1.0).epsilon(0.05));
  for (std::size_t i = 500; i + 500 < ramp.size(); ++i) {
    REQUIRE(std::abs(omw.slow_component[i] - ramp[i]) <= 0.02 * ramp[i]);
  }
  SUBCASE("reconstruction identity") {
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
      REQUIRE(std::abs(omw.samples[i] + omw.slow_component[i] - r.samples[i]) < 1e-9);
    }
  }
}

TEST_CASE("split_components errors") {
  const auto r = ramp_record(100.0, 40.0, 150.0, 50.0);
  CHECK_THROWS_AS(split_components(r, 50.0), Error);
  auto tiny = r;
  tiny.samples.resize(200);
  CHECK_THROWS_AS(split_components(tiny, 0.3), Error);
}

TEST_CASE("denoise examples") {
  SUBCASE("zero in, zero out") {
    OscillometricWaveform w{std::vector<double>(2000, 0.0), std::vector<double>(2000, 100.0), 100.0};
    const auto d = denoise(w);
    for (double v : d.samples) REQUIRE(v == 0.0);
    CHECK(d.slow_component == w.slow_component);
  }
  SUBCASE("1 Hz passes with gain >= 0.999") {
    OscillometricWaveform w{sine(1.0, 100.0, 30.0), std::vector<double>(3000, 0.0), 100.0};
    const auto d = denoise(w);
    CHECK(rms_middle(d.samples, 500) / rms_middle(w.samples, 500) >= 0.999);
  }
  SUBCASE("50 Hz at fs 200 is attenuated by at least 56 dB per pass") {
    const auto lp = butterworth(4, 10.0, 200.0, FilterKind::LowPass);
    CHECK(20 * std::log10(magnitude_response(lp, 50.0, 200.0)) <= -56.0);
    OscillometricWaveform w{sine(50.0, 200.0, 30.0), std::vector<double>(6000, 0.0), 200.0};
    const auto d = denoise(w);
    CHECK(rms_middle(d.samples, 1000) / rms_middle(w.samples, 1000) <= std::pow(10.0, -56.0 / 20.0));
  }
  SUBCASE("fs <= 20 Hz is rejected") {
    OscillometricWaveform w{std::vector<double>(400, 0.0), std::vector<double>(400, 0.0), 20.0};
    CHECK_THROWS_AS(denoise(w), Error);
  }
}

TEST_CASE("denoise is linear") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  OscillometricWaveform w{std::vector<double>(1500), std::vector<double>(1500, 0.0), 100.0};
  for (double& v : w.samples) v = n01(rng);
  const auto base = denoise(w);
  for (double a : {-2.0, 0.5, 10.0}) {
    auto scaled = w;
    for (double& v : scaled.samples) v *= a;
    const auto d = denoise(scaled);
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
      REQUIRE(d.samples[i] == doctest::Approx(a * base.samples[i]).epsilon(1e-9).scale(1e-9));
    }
  }
}

TEST_CASE("filtfilt needs more samples than padding") {
  const auto lp = butterworth(4, 10.0, 100.0, FilterKind::LowPass);
  const std::vector<double> x(10, 1.0);
  CHECK_THROWS_AS(filtfilt(lp, x, 10), Error);
  const auto y = filtfilt(lp, x, 9);
  for (double v : y) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("resample_linear keeps endpoints and lines") {
  std::vector<double> x(1001);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 3.0 * static_cast<double>(i) / 250.0 + 1.0;
  const auto y = resample_linear(x, 250.0, 100.0);
  CHECK(y.size() == 401);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(y[i] == doctest::Approx(3.0 * static_cast<double>(i) / 100.0 + 1.0));
  }
}
