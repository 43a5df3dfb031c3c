#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "oscbp/error.hpp"
#include "oscbp/signal_prep.hpp"

using namespace oscbp;
using namespace oscbp::signal;

namespace {

OscillometricWaveform wave(std::vector<double> x, double fs = 100.0) {
  const std::size_t n = x.size();
  return {std::move(x), std::vector<double>(n, 0.0), fs};
}

OscillometricWaveform sinusoid(double f, double fs, double seconds) {
  std::vector<double> x(static_cast<std::size_t>(seconds * fs));
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = std::sin(2 * std::numbers::pi * f * static_cast<double>(i) / fs);
  }
  return wave(std::move(x), fs);
}

std::vector<std::size_t> brute_force_maxima(const std::vector<double>& x) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    if (x[i] > x[i - 1] && x[i] > x[i + 1]) out.push_back(i);
  }
  return out;
}

PulseSegment pulse(double duration, double amp) {
  PulseSegment p;
  p.duration = duration;
  p.pulse_amp = amp;
  p.peak_amp = amp;
  return p;
}

std::vector<PulseSegment> pulses_with(std::vector<double> durations, std::vector<double> amps) {
  std::vector<PulseSegment> out;
  for (std::size_t i = 0; i < durations.size(); ++i) out.push_back(pulse(durations[i], amps[i]));
  return out;
}

}  // namespace

TEST_CASE("detect_peaks on a 1 Hz sinusoid") {
  // Phase-shifted so the analytic maxima at 0.25 + k s fall inside the 10 s window.
  const auto omw = sinusoid(1.0, 100.0, 10.0);
  const auto peaks = detect_peaks(omw, 6.0);
  REQUIRE(peaks.size() == 10);
  const auto oracle = brute_force_maxima(omw.samples);
  REQUIRE(oracle.size() == 10);
  for (std::size_t k = 0; k < peaks.size(); ++k) {
    CHECK(std::abs(static_cast<double>(peaks[k]) - (25.0 + 100.0 * static_cast<double>(k))) <= 1.0);
    CHECK(peaks[k] == oracle[k]);
  }
}

TEST_CASE("detect_peaks returns strict local maxima on noisy input") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int trial = 0; trial < 5; ++trial) {
    auto omw = sinusoid(1.2, 100.0, 30.0);
    for (double& v : omw.samples) v += noise(rng);
    const auto peaks = detect_peaks(omw, 6.0);
    CHECK(std::is_sorted(peaks.begin(), peaks.end()));
    for (std::size_t i = 1; i < peaks.size(); ++i) REQUIRE(peaks[i] > peaks[i - 1]);
    const auto oracle = brute_force_maxima(omw.samples);
    for (std::size_t p : peaks) {
      REQUIRE(std::binary_search(oracle.begin(), oracle.end(), p));
    }
  }
}

TEST_CASE("detect_peaks errors") {
  CHECK_THROWS_AS(detect_peaks(wave(std::vector<double>(1000, 3.0)), 6.0), Error);
  try {
    detect_peaks(wave(std::vector<double>(1000, 3.0)), 6.0);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientPulses);
  }
  CHECK_THROWS_AS(detect_peaks(sinusoid(1.0, 100.0, 10.0), 0.0), Error);
  CHECK_THROWS_AS(detect_peaks(sinusoid(1.0, 100.0, 10.0), 6.0, {.overlap = 1.0}), Error);
}

TEST_CASE("trough_threshold example") {
  CHECK(trough_threshold(2.0, 0.0) == doctest::Approx(1.6));
  CHECK(2.0 - trough_threshold(2.0, 0.0) == doctest::Approx(0.4));
}

TEST_CASE("segment_pulses on a sinusoid uses the inter-peak minima") {
  const auto omw = sinusoid(1.0, 100.0, 10.0);
  const auto peaks = detect_peaks(omw, 6.0);
  const auto pulses = segment_pulses(omw, peaks);
  REQUIRE(pulses.size() == peaks.size() - 2);
  for (const auto& p : pulses) {
    CHECK(p.trough_is_fallback);
    CHECK(p.start_index == p.minimum_index);
    const auto m = std::min_element(omw.samples.begin() + static_cast<std::ptrdiff_t>(p.start_index) - 60,
                                    omw.samples.begin() + static_cast<std::ptrdiff_t>(p.start_index) + 60);
    CHECK(omw.samples[p.start_index] == *m);
  }
}

TEST_CASE("segment_pulses partitions the span between first and last trough") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> noise(0.0, 0.03);
  auto omw = sinusoid(1.1, 100.0, 20.0);
  for (double& v : omw.samples) v += noise(rng);
  const auto peaks = detect_peaks(omw, 6.0);
  const auto pulses = segment_pulses(omw, peaks);
  REQUIRE(pulses.size() >= 2);
  for (std::size_t i = 1; i < pulses.size(); ++i) {
    CHECK(pulses[i].start_index == pulses[i - 1].end_index);
  }
  for (const auto& p : pulses) {
    CHECK(p.start_index <= p.peak_index);
    CHECK(p.peak_index <= p.end_index);
    CHECK(p.pulse_amp >= 0.0);
    CHECK(p.duration == doctest::Approx(static_cast<double>(p.end_index - p.start_index) / 100.0));
  }
}

TEST_CASE("non-fallback troughs satisfy the threshold rule") {
  // Pulses with a dicrotic notch: a shallow local minimum close to each peak.
  const double fs = 100.0;
  std::vector<double> x(2000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = std::fmod(static_cast<double>(i) / fs, 1.0);
    x[i] = std::exp(-std::pow((t - 0.3) / 0.08, 2)) + 0.3 * std::exp(-std::pow((t - 0.6) / 0.06, 2));
  }
  const auto omw = wave(x, fs);
  const auto peaks = detect_peaks(omw, 6.0);
  const auto pulses = segment_pulses(omw, peaks);
  for (std::size_t k = 0; k < pulses.size(); ++k) {
    const auto& p = pulses[k];
    if (p.trough_is_fallback) continue;
    const double next_peak = x[p.peak_index];
    const double thr = trough_threshold(next_peak, x[p.minimum_index]);
    CHECK(x[p.start_index] < next_peak - thr);
    CHECK(p.start_index >= p.minimum_index);
    CHECK(p.start_index < p.peak_index);
  }
}

TEST_CASE("segment_pulses rejects fewer than three peaks") {
  const auto omw = sinusoid(1.0, 100.0, 10.0);
  const std::vector<std::size_t> two{25, 125};
  CHECK_THROWS_AS(segment_pulses(omw, two), Error);
}

TEST_CASE("flag_outliers duration rule") {
  const auto flagged = flag_outliers(pulses_with({0.8, 0.8, 0.8, 1.2}, {1, 1, 1, 1}));
  CHECK_FALSE(flagged[0].is_outlier);
  CHECK_FALSE(flagged[1].is_outlier);
  CHECK_FALSE(flagged[2].is_outlier);
  CHECK(flagged[3].is_outlier);
}

TEST_CASE("flag_outliers amplitude rule") {
  const std::vector<double> amps{1, 2, 3, 4, 50};
  const auto z = modified_z_scores(amps);
  REQUIRE(z.has_value());
  CHECK((*z)[4] == doctest::Approx(0.6745 * 38.0));
  CHECK((*z)[3] == doctest::Approx(0.6745 * -8.0));
  const auto flagged = flag_outliers(pulses_with({1, 1, 1, 1, 1}, amps));
  for (std::size_t i = 0; i < 4; ++i) CHECK_FALSE(flagged[i].is_outlier);
  CHECK(flagged[4].is_outlier);
}

TEST_CASE("flag_outliers skips the amplitude rule when MAD is zero") {
  CHECK_FALSE(modified_z_scores(std::vector<double>{2, 2, 2, 2}).has_value());
  const auto flagged = flag_outliers(pulses_with({1, 1, 1, 1}, {2, 2, 2, 2}));
  for (const auto& p : flagged) CHECK_FALSE(p.is_outlier);
  CHECK_THROWS_AS(flag_outliers(pulses_with({1, 1}, {1, 2})), Error);
}

TEST_CASE("flag_outliers is permutation covariant") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> d(0.6, 1.3), a(0.5, 2.0);
  std::vector<double> durations(12), amps(12);
  for (auto& v : durations) v = d(rng);
  for (auto& v : amps) v = a(rng);
  amps[3] = 40.0;
  const auto base = flag_outliers(pulses_with(durations, amps));
  std::vector<std::size_t> perm(12);
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> pd, pa;
  for (std::size_t i : perm) {
    pd.push_back(durations[i]);
    pa.push_back(amps[i]);
  }
  const auto shuffled = flag_outliers(pulses_with(pd, pa));
  for (std::size_t k = 0; k < perm.size(); ++k) {
    CHECK(shuffled[k].is_outlier == base[perm[k]].is_outlier);
  }
}

TEST_CASE("normalize_omw") {
  const auto omw = wave({0.0, 1.0, 2.5, -1.0, 0.5});
  SUBCASE("max amplitude maps to exactly one") {
    auto ps = pulses_with({1, 1, 1}, {1.0, 2.5, 0.5});
    const auto n = normalize_omw(omw, ps);
    CHECK(n.scale == 2.5);
    double mx = 0.0;
    for (const auto& p : n.pulses) mx = std::max(mx, p.pulse_amp);
    CHECK(mx == 1.0);
    CHECK(n.omw.samples[2] == 1.0);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      for (std::size_t j = 0; j < ps.size(); ++j) {
        CHECK(n.pulses[i].pulse_amp / n.pulses[j].pulse_amp ==
              doctest::Approx(ps[i].pulse_amp / ps[j].pulse_amp));
      }
    }
  }
  SUBCASE("already unit amplitude is unchanged") {
    const auto n = normalize_omw(omw, pulses_with({1, 1, 1}, {1.0, 0.25, 0.5}));
    CHECK(n.omw.samples == omw.samples);
    CHECK(n.scale == 1.0);
  }
  SUBCASE("outliers do not set the scale") {
    auto ps = pulses_with({1, 1, 1}, {1.0, 9.0, 0.5});
    ps[1].is_outlier = true;
    CHECK(normalize_omw(omw, ps).scale == 1.0);
  }
  SUBCASE("all zero amplitudes") {
    try {
      normalize_omw(omw, pulses_with({1, 1, 1}, {0, 0, 0}));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DegenerateWaveform);
    }
  }
}

TEST_CASE("median") {
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK_THROWS_AS(median({}), Error);
}

TEST_CASE("record validation") {
  CuffDeflationRecord r{"S", "R", 0.0, std::vector<double>(100, 1.0), 120, 80};
  CHECK_THROWS_AS(validate(r), Error);
  SignalConfig c;
  c.trough_half_window = 0;
  CHECK_THROWS_AS(validate(c), Error);
  CHECK_NOTHROW(validate(SignalConfig{}));
}
