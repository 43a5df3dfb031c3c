#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "oscbp/error.hpp"
#include "oscbp/signal_prep.hpp"

namespace oscbp::signal {

std::vector<Biquad> butterworth(int order, double cutoff_hz, double fs, FilterKind kind) {
  if (order < 1) throw Error(ErrorKind::InvalidConfiguration, "filter order must be >= 1");
  if (!(fs > 0.0)) throw Error(ErrorKind::InvalidConfiguration, "sampling rate must be positive");
  if (!(cutoff_hz > 0.0) || cutoff_hz >= fs / 2.0) {
    throw Error(ErrorKind::InvalidConfiguration,
                "cutoff " + std::to_string(cutoff_hz) + " Hz outside (0, Nyquist)");
  }

  const double k = std::tan(std::numbers::pi * cutoff_hz / fs);
  const double k2 = k * k;
  std::vector<Biquad> sos;

  for (int i = 0; i < order / 2; ++i) {
    const double theta = std::numbers::pi * (2.0 * i + 1.0) / (2.0 * order);
    const double q = 2.0 * std::sin(theta);
    const double norm = 1.0 / (1.0 + q * k + k2);
    Biquad s;
    if (kind == FilterKind::LowPass) {
      s.b0 = k2 * norm;
      s.b1 = 2.0 * s.b0;
      s.b2 = s.b0;
    } else {
      s.b0 = norm;
      s.b1 = -2.0 * norm;
      s.b2 = norm;
    }
    s.a1 = 2.0 * (k2 - 1.0) * norm;
    s.a2 = (1.0 - q * k + k2) * norm;
    sos.push_back(s);
  }
  if (order % 2 == 1) {
    Biquad s;
    const double norm = 1.0 / (1.0 + k);
    if (kind == FilterKind::LowPass) {
      s.b0 = k * norm;
      s.b1 = s.b0;
    } else {
      s.b0 = norm;
      s.b1 = -norm;
    }
    s.a1 = (k - 1.0) * norm;
    sos.push_back(s);
  }
  return sos;
}

namespace {

struct SectionState {
  double z1 = 0.0;
  double z2 = 0.0;
};

double dc_gain(const Biquad& s) { return (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2); }

// Per-section state that holds the cascade at rest for a constant unit input.
std::vector<SectionState> steady_state(std::span<const Biquad> sos) {
  std::vector<SectionState> zi(sos.size());
  double level = 1.0;
  for (std::size_t i = 0; i < sos.size(); ++i) {
    const Biquad& s = sos[i];
    const double y = dc_gain(s) * level;
    zi[i].z2 = s.b2 * level - s.a2 * y;
    zi[i].z1 = s.b1 * level - s.a1 * y + zi[i].z2;
    level = y;
  }
  return zi;
}

void run_cascade(std::span<const Biquad> sos, std::vector<SectionState> state,
                 std::vector<double>& x) {
  for (double& v : x) {
    double in = v;
    for (std::size_t i = 0; i < sos.size(); ++i) {
      const Biquad& s = sos[i];
      SectionState& z = state[i];
      const double out = s.b0 * in + z.z1;
      z.z1 = s.b1 * in - s.a1 * out + z.z2;
      z.z2 = s.b2 * in - s.a2 * out;
      in = out;
    }
    v = in;
  }
}

}  // namespace

std::vector<double> sosfilt(std::span<const Biquad> sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  run_cascade(sos, std::vector<SectionState>(sos.size()), y);
  return y;
}

std::vector<double> filtfilt(std::span<const Biquad> sos, std::span<const double> x,
                             std::size_t padlen) {
  const std::size_t n = x.size();
  if (n < 2) throw Error(ErrorKind::ShortRecord, "filtfilt needs at least two samples");
  if (padlen >= n) {
    throw Error(ErrorKind::ShortRecord, "signal of " + std::to_string(n) +
                                            " samples too short for padding of " +
                                            std::to_string(padlen));
  }

  std::vector<double> ext;
  ext.reserve(n + 2 * padlen);
  for (std::size_t i = padlen; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= padlen; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const std::vector<SectionState> unit = steady_state(sos);
  auto scaled = [&](double level) {
    std::vector<SectionState> zi = unit;
    for (auto& z : zi) {
      z.z1 *= level;
      z.z2 *= level;
    }
    return zi;
  };

  run_cascade(sos, scaled(ext.front()), ext);
  std::reverse(ext.begin(), ext.end());
  run_cascade(sos, scaled(ext.front()), ext);
  std::reverse(ext.begin(), ext.end());

  return {ext.begin() + static_cast<std::ptrdiff_t>(padlen),
          ext.begin() + static_cast<std::ptrdiff_t>(padlen + n)};
}

double magnitude_response(std::span<const Biquad> sos, double f, double fs) {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * f / fs);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h = 1.0;
  for (const Biquad& s : sos) {
    h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  }
  return std::abs(h);
}

}  // namespace oscbp::signal
