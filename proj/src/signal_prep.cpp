#include "oscbp/signal_prep.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oscbp/error.hpp"

namespace oscbp::signal {

namespace {

std::size_t default_padlen(std::size_t n_sections, double fs, double cutoff_hz) {
  const auto transient = static_cast<std::size_t>(std::ceil(3.0 * fs / cutoff_hz));
  return std::max<std::size_t>(3 * (2 * n_sections + 1), transient);
}

bool is_strict_local_max(std::span<const double> x, std::size_t i) {
  return i > 0 && i + 1 < x.size() && x[i] > x[i - 1] && x[i] > x[i + 1];
}

}  // namespace

void validate(const CuffDeflationRecord& record) {
  if (!(record.sampling_rate > 0.0) || !std::isfinite(record.sampling_rate)) {
    throw Error(ErrorKind::InvalidConfiguration, "record " + record.record_id +
                                                     ": sampling rate must be positive");
  }
  if (static_cast<double>(record.samples.size()) < 10.0 * record.sampling_rate) {
    throw Error(ErrorKind::ShortRecord,
                "record " + record.record_id + " has " + std::to_string(record.samples.size()) +
                    " samples, needs at least 10 s of data");
  }
  if (!(record.ref_sbp > record.ref_dbp && record.ref_dbp > 0.0)) {
    throw Error(ErrorKind::InvalidConfiguration,
                "record " + record.record_id + ": reference labels need sbp > dbp > 0");
  }
}

void validate(const SignalConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::InvalidConfiguration, what);
  };
  require(c.hp_cutoff_hz > 0.0, "hp_cutoff_hz must be positive");
  require(c.lp_cutoff_hz > c.hp_cutoff_hz, "lp_cutoff_hz must exceed hp_cutoff_hz");
  require(c.working_rate_hz > 2.0 * c.lp_cutoff_hz, "working rate must exceed 2 x lp_cutoff_hz");
  require(c.hp_order >= 1 && c.lp_order >= 1, "filter orders must be >= 1");
  require(c.ampd_window_s > 0.0, "ampd_window_s must be positive");
  require(c.ampd_overlap >= 0.0 && c.ampd_overlap < 1.0, "ampd_overlap must be in [0, 1)");
  require(c.peak_dedup_s >= 0.0, "peak_dedup_s must be non-negative");
  require(c.trough_half_window >= 1, "trough_half_window must be >= 1");
  require(c.duration_tolerance_s > 0.0, "duration_tolerance_s must be positive");
  require(c.mz_threshold > 0.0, "mz_threshold must be positive");
}

std::vector<double> resample_linear(std::span<const double> x, double fs_in, double fs_out) {
  if (!(fs_in > 0.0) || !(fs_out > 0.0)) {
    throw Error(ErrorKind::InvalidConfiguration, "resampling rates must be positive");
  }
  if (x.empty()) return {};
  if (fs_in == fs_out) return {x.begin(), x.end()};
  const double duration = static_cast<double>(x.size() - 1) / fs_in;
  const auto n_out = static_cast<std::size_t>(std::floor(duration * fs_out + 1e-9)) + 1;
  std::vector<double> y(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * fs_in / fs_out;
    const auto lo = std::min(static_cast<std::size_t>(pos), x.size() - 1);
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    y[i] = x[lo] + (x[hi] - x[lo]) * frac;
  }
  return y;
}

CuffDeflationRecord resample_record(const CuffDeflationRecord& record, double fs_out) {
  CuffDeflationRecord out = record;
  out.samples = resample_linear(record.samples, record.sampling_rate, fs_out);
  out.sampling_rate = fs_out;
  return out;
}

OscillometricWaveform split_components(const CuffDeflationRecord& record, double hp_cutoff_hz,
                                       int order) {
  validate(record);
  const double fs = record.sampling_rate;
  const auto sos = butterworth(order, hp_cutoff_hz, fs, FilterKind::HighPass);
  const std::size_t n = record.samples.size();
  const auto period = static_cast<std::size_t>(std::ceil(fs / hp_cutoff_hz));
  if (n <= period) {
    throw Error(ErrorKind::ShortRecord, "record " + record.record_id +
                                            " shorter than one high-pass cutoff period");
  }
  const std::size_t padlen = std::min(n - 1, default_padlen(sos.size(), fs, hp_cutoff_hz));

  OscillometricWaveform omw;
  omw.sampling_rate = fs;
  omw.samples = filtfilt(sos, record.samples, padlen);
  omw.slow_component.resize(n);
  for (std::size_t i = 0; i < n; ++i) omw.slow_component[i] = record.samples[i] - omw.samples[i];
  return omw;
}

OscillometricWaveform denoise(const OscillometricWaveform& omw, double cutoff_hz, int order) {
  if (!(omw.sampling_rate > 2.0 * cutoff_hz)) {
    throw Error(ErrorKind::InvalidConfiguration,
                "sampling rate " + std::to_string(omw.sampling_rate) +
                    " Hz does not exceed twice the low-pass cutoff");
  }
  const auto sos = butterworth(order, cutoff_hz, omw.sampling_rate, FilterKind::LowPass);
  const std::size_t n = omw.samples.size();
  if (n < 2) throw Error(ErrorKind::ShortRecord, "waveform too short to denoise");
  const std::size_t padlen =
      std::min(n - 1, default_padlen(sos.size(), omw.sampling_rate, cutoff_hz));

  OscillometricWaveform out = omw;
  out.samples = filtfilt(sos, omw.samples, padlen);
  return out;
}

std::vector<std::size_t> ampd(std::span<const double> input) {
  const std::size_t n = input.size();
  if (n < 3) return {};

  // Linear detrend (least squares).
  std::vector<double> x(input.begin(), input.end());
  {
    const double nd = static_cast<double>(n);
    const double t_mean = (nd - 1.0) / 2.0;
    const double x_mean = std::accumulate(x.begin(), x.end(), 0.0) / nd;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dt = static_cast<double>(i) - t_mean;
      sxy += dt * (x[i] - x_mean);
      sxx += dt * dt;
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] -= x_mean + slope * (static_cast<double>(i) - t_mean);
    }
  }

  // x[i] is a maximum at scale k when it exceeds every in-range neighbour at distance k.
  auto is_max = [&](std::size_t i, std::size_t k) {
    const bool has_left = i >= k;
    const bool has_right = i + k < n;
    if (!has_left && !has_right) return false;
    if (has_left && !(x[i] > x[i - k])) return false;
    if (has_right && !(x[i] > x[i + k])) return false;
    return true;
  };

  // Row sums of the local maxima scalogram count non-maxima; the scale with the
  // fewest non-maxima bounds the scales a true peak must dominate. Positions without
  // both neighbours count as non-maxima here so that wide scales are not favoured.
  const std::size_t scales = (n + 1) / 2 - 1;
  if (scales == 0) return {};
  std::size_t best_scale = 1;
  std::size_t best_count = n + 1;
  for (std::size_t k = 1; k <= scales; ++k) {
    std::size_t non_max = 0;
    for (std::size_t i = 0; i < n; ++i) non_max += (i >= k && i + k < n && is_max(i, k)) ? 0 : 1;
    if (non_max < best_count) {
      best_count = non_max;
      best_scale = k;
    }
  }

  std::vector<std::size_t> peaks;
  for (std::size_t i = 0; i < n; ++i) {
    bool all = true;
    for (std::size_t k = 1; k <= best_scale && all; ++k) all = is_max(i, k);
    if (all) peaks.push_back(i);
  }
  return peaks;
}

std::vector<std::size_t> detect_peaks(const OscillometricWaveform& omw, double window_s,
                                      PeakDetectionOptions options) {
  const std::span<const double> x = omw.samples;
  const std::size_t n = x.size();
  const double fs = omw.sampling_rate;
  if (!(window_s > 0.0) || !(fs > 0.0)) {
    throw Error(ErrorKind::InvalidConfiguration, "peak window and sampling rate must be positive");
  }
  if (options.overlap < 0.0 || options.overlap >= 1.0) {
    throw Error(ErrorKind::InvalidConfiguration, "window overlap must be in [0, 1)");
  }

  // Window detrending can move a maximum by a sample; climb to the raw local maximum.
  auto keep_strict = [&](std::vector<std::size_t> idx) {
    for (auto& i : idx) {
      for (;;) {
        if (i > 0 && x[i - 1] > x[i]) --i;
        else if (i + 1 < n && x[i + 1] > x[i]) ++i;
        else break;
      }
    }
    std::erase_if(idx, [&](std::size_t i) { return !is_strict_local_max(x, i); });
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    return idx;
  };

  // First full-signal pass sets the window length from the median beat interval.
  const std::vector<std::size_t> coarse = keep_strict(ampd(x));
  auto window = static_cast<std::size_t>(std::llround(window_s * fs));
  if (coarse.size() >= 2) {
    std::vector<double> intervals;
    for (std::size_t i = 1; i < coarse.size(); ++i) {
      intervals.push_back(static_cast<double>(coarse[i] - coarse[i - 1]));
    }
    // A large artifact can wreck the full-signal pass; ignore implausible beat intervals.
    const double beat = median(intervals);
    if (beat >= 0.25 * fs && beat <= 2.0 * fs) {
      window = std::max(window, 4 * static_cast<std::size_t>(std::llround(beat)));
    }
  }
  window = std::clamp<std::size_t>(window, 3, std::max<std::size_t>(n, 3));

  std::vector<std::size_t> found;
  if (window >= n) {
    found = coarse;
  } else {
    const auto step = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(window) *
                                                  (1.0 - options.overlap))));
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + window < n; s += step) starts.push_back(s);
    starts.push_back(n - window);
    for (std::size_t s : starts) {
      for (std::size_t p : ampd(x.subspan(s, window))) found.push_back(s + p);
    }
    found = keep_strict(std::move(found));
  }

  std::sort(found.begin(), found.end());
  found.erase(std::unique(found.begin(), found.end()), found.end());

  // Merge peaks closer than the dedup distance, keeping the taller one.
  const double min_gap = options.dedup_s * fs;
  std::vector<std::size_t> merged;
  for (std::size_t p : found) {
    if (!merged.empty() && static_cast<double>(p - merged.back()) < min_gap) {
      if (x[p] > x[merged.back()]) merged.back() = p;
    } else {
      merged.push_back(p);
    }
  }

  if (merged.size() < 3) {
    throw Error(ErrorKind::InsufficientPulses,
                "found " + std::to_string(merged.size()) + " peaks, need at least 3");
  }
  return merged;
}

double trough_threshold(double next_peak, double minimum) {
  return 4.0 * (next_peak - minimum) / 5.0;
}

std::vector<PulseSegment> segment_pulses(const OscillometricWaveform& omw,
                                         std::span<const std::size_t> peaks,
                                         std::size_t half_window) {
  const std::span<const double> x = omw.samples;
  if (peaks.size() < 3) {
    throw Error(ErrorKind::InsufficientPulses, "segmentation needs at least 3 peaks");
  }
  for (std::size_t i = 1; i < peaks.size(); ++i) {
    if (peaks[i] <= peaks[i - 1] || peaks[i] >= x.size()) {
      throw Error(ErrorKind::InvalidConfiguration, "peak indices must be strictly increasing");
    }
  }

  struct Trough {
    std::size_t index;
    std::size_t minimum_index;
    bool fallback;
  };
  std::vector<Trough> troughs;
  for (std::size_t i = 0; i + 1 < peaks.size(); ++i) {
    const std::size_t a = peaks[i];
    const std::size_t b = peaks[i + 1];
    const std::size_t m = static_cast<std::size_t>(
        std::min_element(x.begin() + static_cast<std::ptrdiff_t>(a),
                         x.begin() + static_cast<std::ptrdiff_t>(b + 1)) -
        x.begin());
    const double limit = x[b] - trough_threshold(x[b], x[m]);

    auto is_local_min = [&](std::size_t j) {
      const std::size_t lo = j >= half_window ? j - half_window : 0;
      const std::size_t hi = std::min(j + half_window, x.size() - 1);
      for (std::size_t k = lo; k <= hi; ++k) {
        if (x[k] < x[j]) return false;
      }
      return true;
    };

    Trough t{m, m, true};
    // Search from the next peak back toward the minimum: the first hit is the closest.
    for (std::size_t j = b - 1; j > m; --j) {
      if (x[j] < limit && is_local_min(j)) {
        t = {j, m, false};
        break;
      }
    }
    troughs.push_back(t);
  }

  const double fs = omw.sampling_rate;
  std::vector<PulseSegment> pulses;
  for (std::size_t k = 0; k + 1 < troughs.size(); ++k) {
    PulseSegment p;
    p.start_index = troughs[k].index;
    p.end_index = troughs[k + 1].index;
    p.peak_index = peaks[k + 1];
    p.minimum_index = troughs[k].minimum_index;
    p.trough_is_fallback = troughs[k].fallback;
    p.peak_amp = x[p.peak_index];
    p.trough_amp = x[p.start_index];
    p.pulse_amp = std::max(0.0, p.peak_amp - p.trough_amp);
    p.duration = static_cast<double>(p.end_index - p.start_index) / fs;
    pulses.push_back(p);
  }
  return pulses;
}

double median(std::vector<double> v) {
  if (v.empty()) throw Error(ErrorKind::InsufficientData, "median of empty sequence");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

std::optional<std::vector<double>> modified_z_scores(std::span<const double> a) {
  if (a.empty()) return std::vector<double>{};
  const double center = median({a.begin(), a.end()});
  std::vector<double> dev;
  dev.reserve(a.size());
  for (double v : a) dev.push_back(std::abs(v - center));
  const double mad = median(std::move(dev));
  if (mad == 0.0) return std::nullopt;
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  std::vector<double> z;
  z.reserve(a.size());
  for (double v : a) z.push_back(0.6745 * (v - mean) / mad);
  return z;
}

std::vector<PulseSegment> flag_outliers(std::vector<PulseSegment> pulses, OutlierRule rule) {
  if (pulses.size() < 3) {
    throw Error(ErrorKind::InsufficientPulses, "outlier analysis needs at least 3 pulses");
  }
  std::vector<double> durations, amplitudes;
  for (const auto& p : pulses) {
    durations.push_back(p.duration);
    amplitudes.push_back(p.pulse_amp);
  }
  const double med_d = median(durations);
  const auto z = modified_z_scores(amplitudes);
  for (std::size_t i = 0; i < pulses.size(); ++i) {
    const bool bad_duration = pulses[i].duration < med_d - rule.duration_tolerance_s ||
                              pulses[i].duration > med_d + rule.duration_tolerance_s;
    const bool bad_amplitude = z && (*z)[i] > rule.mz_threshold;
    pulses[i].is_outlier = bad_duration || bad_amplitude;
  }
  return pulses;
}

NormalizedWaveform normalize_omw(const OscillometricWaveform& omw,
                                 std::vector<PulseSegment> pulses) {
  double peak = 0.0;
  for (const auto& p : pulses) {
    if (!p.is_outlier) peak = std::max(peak, std::abs(p.pulse_amp));
  }
  if (!(peak > 0.0)) {
    throw Error(ErrorKind::DegenerateWaveform, "no non-outlier pulse with positive amplitude");
  }
  NormalizedWaveform out{omw, std::move(pulses), peak};
  for (double& v : out.omw.samples) v /= peak;
  for (auto& p : out.pulses) {
    p.peak_amp /= peak;
    p.trough_amp /= peak;
    p.pulse_amp /= peak;
  }
  return out;
}

PreprocessResult preprocess(const CuffDeflationRecord& input, const SignalConfig& config) {
  validate(config);
  const CuffDeflationRecord record = input.sampling_rate == config.working_rate_hz
                                         ? input
                                         : resample_record(input, config.working_rate_hz);
  const auto omw = denoise(split_components(record, config.hp_cutoff_hz, config.hp_order),
                           config.lp_cutoff_hz, config.lp_order);
  PreprocessResult result;
  result.peaks = detect_peaks(omw, config.ampd_window_s,
                              {.overlap = config.ampd_overlap, .dedup_s = config.peak_dedup_s});
  auto pulses = flag_outliers(segment_pulses(omw, result.peaks, config.trough_half_window),
                              {config.duration_tolerance_s, config.mz_threshold});
  auto normalized = normalize_omw(omw, std::move(pulses));
  result.omw = std::move(normalized.omw);
  result.pulses = std::move(normalized.pulses);
  result.scale = normalized.scale;
  return result;
}

}  // namespace oscbp::signal
