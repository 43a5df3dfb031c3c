#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include "oscbp/error.hpp"
#include "oscbp/morpho_grid.hpp"

using namespace oscbp;
using namespace oscbp::grid;
using signal::PulseSegment;

namespace {

// Back-to-back half-sine pulses of fixed length; pulse k has height heights[k] and sits
// at pressures[k] in a piecewise-constant slow trace.
struct Fixture {
  std::vector<double> omw;
  std::vector<double> slow;
  std::vector<PulseSegment> pulses;
};

Fixture fixture(const std::vector<double>& pressures, const std::vector<double>& heights,
                std::size_t len = 50) {
  Fixture f;
  const std::size_t n = pressures.size() * len + 1;
  f.omw.assign(n, 0.0);
  f.slow.assign(n, pressures.back());
  for (std::size_t k = 0; k < pressures.size(); ++k) {
    PulseSegment p;
    p.start_index = k * len;
    p.end_index = (k + 1) * len;
    p.peak_index = p.start_index + len / 2;
    for (std::size_t i = p.start_index; i < p.end_index; ++i) {
      f.omw[i] = heights[k] * std::sin(std::numbers::pi * static_cast<double>(i - p.start_index) /
                                       static_cast<double>(len));
      f.slow[i] = pressures[k];
    }
    f.pulses.push_back(p);
  }
  return f;
}

std::size_t col(int pressure) { return static_cast<std::size_t>(pressure - 21); }

}  // namespace

TEST_CASE("pulse_pressure examples") {
  PulseSegment p;
  p.peak_index = 123;
  CHECK(pulse_pressure(p, std::vector<double>(400, 100.0)) == 100.0);

  std::vector<double> ramp(4000);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = 150.0 - 100.0 * static_cast<double>(i) / 4000.0;
  p.peak_index = 2000;
  CHECK(pulse_pressure(p, ramp) == doctest::Approx(100.0));
  PulseSegment q = p;
  CHECK(pulse_pressure(q, ramp) == pulse_pressure(p, ramp));

  p.peak_index = 4000;
  CHECK_THROWS_AS(pulse_pressure(p, ramp), Error);
}

TEST_CASE("resample_pulse examples") {
  std::vector<double> x(215);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double& v : x) v = u(rng);
  CHECK(resample_pulse(x) == x);

  for (std::size_t len : {2u, 3u, 17u, 100u, 400u}) {
    std::vector<double> line(len);
    for (std::size_t i = 0; i < len; ++i) line[i] = static_cast<double>(i) / static_cast<double>(len - 1);
    const auto y = resample_pulse(line);
    CHECK(y.front() == 0.0);
    CHECK(y.back() == 1.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      REQUIRE(y[i] == doctest::Approx(static_cast<double>(i) / 214.0).epsilon(1e-12));
    }
  }

  std::vector<double> half(100);
  for (std::size_t i = 0; i < 100; ++i) half[i] = std::sin(std::numbers::pi * static_cast<double>(i) / 99.0);
  const auto up = resample_pulse(half);
  double worst = 0.0;
  for (std::size_t i = 0; i < up.size(); ++i) {
    worst = std::max(worst, std::abs(up[i] - std::sin(std::numbers::pi * static_cast<double>(i) / 214.0)));
  }
  CHECK(worst < 1e-3);

  CHECK_THROWS_AS(resample_pulse(std::vector<double>{1.0}), Error);
}

TEST_CASE("column_for_pressure rounds ties down") {
  const GridConfig c;
  CHECK(column_for_pressure(100.0, c) == col(100));
  CHECK(column_for_pressure(100.5, c) == col(100));
  CHECK(column_for_pressure(100.51, c) == col(101));
  CHECK(column_for_pressure(5.0, c) == 0);
  CHECK(column_for_pressure(500.0, c) == 214);
}

TEST_CASE("build_grid shape and provenance") {
  const auto f = fixture({120, 110, 100}, {1.0, 2.0, 1.5});
  const auto g = build_grid(f.pulses, f.omw, f.slow);
  CHECK(g.rows == 215);
  CHECK(g.cols == 215);
  CHECK(g.values.size() == 215 * 215);
  CHECK(g.column_pressure.front() == 21.0);
  CHECK(g.column_pressure.back() == 235.0);
  for (std::size_t c = 1; c < g.cols; ++c) CHECK(g.column_pressure[c] - g.column_pressure[c - 1] == 1.0);
  CHECK(g.provenance[col(100)] == ColumnSource::Original);
  CHECK(g.provenance[col(105)] == ColumnSource::Interpolated);
  CHECK(g.provenance[col(50)] == ColumnSource::Extrapolated);
  CHECK(g.provenance[col(200)] == ColumnSource::Extrapolated);

  SUBCASE("original columns hold the resampled pulse bit for bit") {
    for (std::size_t k = 0; k < f.pulses.size(); ++k) {
      const auto& p = f.pulses[k];
      const auto shape = resample_pulse(
          std::span<const double>(f.omw).subspan(p.start_index, p.end_index - p.start_index + 1));
      CHECK(g.column(column_for_pressure(f.slow[p.peak_index], GridConfig{})) == shape);
    }
  }
}

TEST_CASE("build_grid midpoint interpolation") {
  const auto f = fixture({102, 100}, {3.0, 1.0});
  const auto g = build_grid(f.pulses, f.omw, f.slow);
  for (std::size_t r = 0; r < g.rows; ++r) {
    CHECK(g.at(r, col(101)) == (g.at(r, col(100)) + g.at(r, col(102))) / 2.0);
  }
}

TEST_CASE("build_grid linear extrapolation") {
  // Flat pulses: every row of the column at 60 is 2 and at 61 is 3.
  std::vector<double> omw(21, 0.0), slow(21, 0.0);
  for (std::size_t i = 0; i <= 10; ++i) {
    omw[i] = 3.0;
    slow[i] = 61.0;
  }
  for (std::size_t i = 11; i <= 20; ++i) {
    omw[i] = 2.0;
    slow[i] = 60.0;
  }
  std::vector<PulseSegment> pulses(2);
  pulses[0].start_index = 0;
  pulses[0].end_index = 10;
  pulses[0].peak_index = 5;
  pulses[1].start_index = 11;
  pulses[1].end_index = 20;
  pulses[1].peak_index = 15;
  const auto g = build_grid(pulses, omw, slow);
  for (std::size_t r = 0; r < g.rows; ++r) {
    CHECK(g.at(r, col(60)) == 2.0);
    CHECK(g.at(r, col(61)) == 3.0);
    CHECK(g.at(r, col(63)) == doctest::Approx(5.0));
    CHECK(g.at(r, col(30)) == doctest::Approx(-28.0));
  }

  SUBCASE("clamped extrapolation stays in the observed range") {
    GridConfig c;
    c.clamp_extrapolation = true;
    const auto gc = build_grid(pulses, omw, slow, c);
    for (std::size_t r = 0; r < gc.rows; ++r) {
      CHECK(gc.at(r, col(63)) == 3.0);
      CHECK(gc.at(r, col(30)) == 2.0);
    }
  }
}

TEST_CASE("build_grid averages colliding pulses") {
  const auto f = fixture({100, 100, 90}, {1.0, 3.0, 1.0});
  const auto g = build_grid(f.pulses, f.omw, f.slow);
  const auto a = resample_pulse(std::span<const double>(f.omw).subspan(0, 51));
  const auto b = resample_pulse(std::span<const double>(f.omw).subspan(50, 51));
  for (std::size_t r = 0; r < g.rows; ++r) CHECK(g.at(r, col(100)) == doctest::Approx((a[r] + b[r]) / 2));
}

TEST_CASE("build_grid ignores pulse order") {
  auto f = fixture({130, 125, 125, 118, 111, 104, 97, 90}, {1, 2, 3, 4, 5, 4, 3, 2});
  const auto g = build_grid(f.pulses, f.omw, f.slow);
  std::mt19937_64 rng(4);
  for (int t = 0; t < 5; ++t) {
    std::shuffle(f.pulses.begin(), f.pulses.end(), rng);
    CHECK(build_grid(f.pulses, f.omw, f.slow).values == g.values);
  }
}

TEST_CASE("build_grid monotone placement") {
  const std::vector<double> pressures{150, 140.2, 133, 120.7, 101, 80};
  const auto f = fixture(pressures, {1, 1, 1, 1, 1, 1});
  std::size_t prev = 1000;
  for (const auto& p : f.pulses) {
    const std::size_t c = column_for_pressure(pulse_pressure(p, f.slow), GridConfig{});
    CHECK(c <= prev);
    prev = c;
  }
}

TEST_CASE("build_grid errors") {
  auto f = fixture({120, 110, 100}, {1, 1, 1});
  f.pulses[0].is_outlier = true;
  f.pulses[1].is_outlier = true;
  try {
    build_grid(f.pulses, f.omw, f.slow);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientPulses);
  }
  const auto same = fixture({100, 100, 100}, {1, 2, 3});
  CHECK_THROWS_AS(build_grid(same.pulses, same.omw, same.slow), Error);
}

TEST_CASE("grid serialization round-trips") {
  const auto f = fixture({150, 120, 90}, {0.3, 1.0, 0.6});
  const auto g = build_grid(f.pulses, f.omw, f.slow);
  const GridHeader h{"S01", "S01_R2", 20, 235};

  SUBCASE("binary is exact") {
    std::stringstream ss;
    write_grid_binary(ss, h, g);
    const auto back = read_grid_binary(ss);
    CHECK(back.header.subject_id == "S01");
    CHECK(back.header.record_id == "S01_R2");
    CHECK(back.grid.values == g.values);
    CHECK(back.grid.column_pressure == g.column_pressure);
  }
  SUBCASE("csv is exact") {
    std::stringstream ss;
    write_grid_csv(ss, h, g);
    const auto back = read_grid_csv(ss);
    CHECK(back.grid.rows == 215);
    CHECK(back.grid.values == g.values);
  }
  SUBCASE("truncated binary is rejected") {
    std::stringstream ss;
    write_grid_binary(ss, h, g);
    std::string s = ss.str();
    s.resize(s.size() - 8);
    std::istringstream in(s);
    CHECK_THROWS_AS(read_grid_binary(in), Error);
  }
}
