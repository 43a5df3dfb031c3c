#include "oscbp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <random>

#include "oscbp/error.hpp"
#include "oscbp/seed.hpp"
#include "oscbp/text.hpp"

namespace oscbp::synth {

namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double uniform(Range r) { return uniform(r.lo, r.hi); }
  double normal(double sd) { return std::normal_distribution<double>(0.0, sd)(engine_); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

 private:
  std::mt19937_64 engine_;
};

constexpr double kArtifactAmplitudeScale = 15.0;
constexpr double kArtifactDurationScale = 2.0;

// Distance (in widths) from the envelope peak at which it falls to ratio.
double ratio_offset(double ratio) { return std::sqrt(-2.0 * std::log(ratio)); }

}  // namespace

void validate(const SyntheticCohortConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::InvalidConfiguration, what);
  };
  require(c.n_subjects > 0 && c.records_per_subject > 0, "cohort must be non-empty");
  require(c.sbp_range.lo > 0 && c.sbp_range.hi >= c.sbp_range.lo, "bad sbp_range");
  require(c.dbp_range.lo > 0 && c.dbp_range.hi >= c.dbp_range.lo, "bad dbp_range");
  require(c.min_pulse_pressure > 0, "min_pulse_pressure must be positive");
  require(c.sbp_range.lo - c.min_pulse_pressure >= c.dbp_range.lo,
          "sbp_range must lie above dbp_range by at least min_pulse_pressure");
  require(c.heart_rate_range.lo > 0 && c.heart_rate_range.hi >= c.heart_rate_range.lo,
          "bad heart_rate_range");
  require(c.deflation_rate > 0, "deflation_rate must be positive");
  require(c.envelope_asymmetry > 0, "envelope_asymmetry must be positive");
  require(c.amplitude_range.lo > 0 && c.amplitude_range.hi >= c.amplitude_range.lo,
          "bad amplitude_range");
  require(c.noise_sd >= 0, "noise_sd must be non-negative");
  require(c.artifact_rate >= 0, "artifact_rate must be non-negative");
  require(c.sampling_rate > 0, "sampling_rate must be positive");
  require(c.sys_ratio > 0 && c.sys_ratio < 1 && c.dia_ratio > 0 && c.dia_ratio < 1,
          "ratios must be in (0, 1)");
  require(c.record_jitter >= 0, "record_jitter must be non-negative");
}

double Envelope::operator()(double p) const {
  const double w = p >= map ? upper_width : lower_width;
  const double d = (p - map) / w;
  return amplitude * std::exp(-0.5 * d * d);
}

Envelope envelope_for(double sbp, double dbp, double amplitude, double asymmetry,
                      double sys_ratio, double dia_ratio) {
  if (!(sbp > dbp)) throw Error(ErrorKind::InvalidConfiguration, "envelope needs sbp > dbp");
  const double cs = ratio_offset(sys_ratio);
  const double cd = ratio_offset(dia_ratio);
  Envelope e;
  e.amplitude = amplitude;
  e.upper_width = (sbp - dbp) / (cs + asymmetry * cd);
  e.lower_width = asymmetry * e.upper_width;
  e.map = sbp - cs * e.upper_width;
  return e;
}

GeneratedRecord render_record(const SyntheticCohortConfig& config, const RecordSpec& spec,
                              std::uint64_t seed) {
  validate(config);
  Rng rng(seed);
  const double fs = config.sampling_rate;
  const double start = spec.sbp + 30.0;
  const double stop = std::max(spec.dbp - 20.0, 20.0);
  const double duration = (start - stop) / config.deflation_rate;
  if (duration < 10.0) {
    throw Error(ErrorKind::InvalidConfiguration, "deflation too fast: record shorter than 10 s");
  }
  const auto n = static_cast<std::size_t>(std::floor(duration * fs)) + 1;
  const double period = 60.0 / spec.heart_rate;

  GeneratedRecord out;
  SyntheticTruth& truth = out.truth;
  truth.sbp = spec.sbp;
  truth.dbp = spec.dbp;
  truth.envelope = envelope_for(spec.sbp, spec.dbp, spec.amplitude, config.envelope_asymmetry,
                                config.sys_ratio, config.dia_ratio);
  truth.map = truth.envelope.map;

  // Artifact beats are kept two beats away from either end of the recording.
  const auto approx_beats = static_cast<std::size_t>(duration / period);
  std::vector<std::pair<std::size_t, ArtifactKind>> planned;
  auto n_artifacts = static_cast<std::size_t>(config.artifact_rate);
  if (rng.uniform() < config.artifact_rate - static_cast<double>(n_artifacts)) ++n_artifacts;
  if (approx_beats > 8) {
    const std::size_t lo = 2, span = approx_beats - 6;
    for (std::size_t a = 0; a < n_artifacts && planned.size() < span; ++a) {
      std::size_t k;
      do {
        k = lo + rng.index(span);
      } while (std::any_of(planned.begin(), planned.end(),
                           [k](const auto& p) { return p.first == k; }));
      const auto kind = rng.uniform() < 0.5 ? ArtifactKind::AmplitudeScaled
                                            : ArtifactKind::DurationStretched;
      planned.emplace_back(k, kind);
    }
    std::sort(planned.begin(), planned.end());
  }

  auto cuff = [&](double t) { return start - config.deflation_rate * t; };
  std::vector<double> samples(n);
  for (std::size_t i = 0; i < n; ++i) samples[i] = cuff(static_cast<double>(i) / fs);

  double t0 = 0.0;
  for (std::size_t k = 0;; ++k) {
    const auto plan = std::find_if(planned.begin(), planned.end(),
                                   [k](const auto& p) { return p.first == k; });
    const bool stretched = plan != planned.end() && plan->second == ArtifactKind::DurationStretched;
    const bool scaled = plan != planned.end() && plan->second == ArtifactKind::AmplitudeScaled;
    const double len = stretched ? kArtifactDurationScale * period : period;
    if (t0 + len > duration) break;

    const double peak_t = t0 + len / 2.0;
    const double amp = scaled ? kArtifactAmplitudeScale * spec.amplitude : truth.envelope(cuff(peak_t));
    const auto first = static_cast<std::size_t>(std::ceil(t0 * fs));
    for (std::size_t i = first; i < n; ++i) {
      const double tau = static_cast<double>(i) / fs - t0;
      if (tau > len) break;
      samples[i] += amp * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * tau / len));
    }
    if (plan != planned.end()) {
      truth.injected_artifact_indices.push_back(truth.beat_times.size());
      truth.artifact_kinds.push_back(plan->second);
    }
    truth.beat_times.push_back(peak_t);
    t0 += len;
  }

  if (config.noise_sd > 0.0) {
    for (double& v : samples) v += rng.normal(config.noise_sd);
  }

  out.record = {spec.subject_id, spec.record_id, fs, std::move(samples), spec.sbp, spec.dbp};
  return out;
}

namespace {

RecordSpec draw_subject(const SyntheticCohortConfig& c, Rng& rng) {
  RecordSpec s;
  s.sbp = rng.uniform(c.sbp_range);
  const double dbp_hi = std::min(c.dbp_range.hi, s.sbp - c.min_pulse_pressure);
  s.dbp = rng.uniform(c.dbp_range.lo, dbp_hi);
  s.heart_rate = rng.uniform(c.heart_rate_range);
  s.amplitude = rng.uniform(c.amplitude_range);
  return s;
}

}  // namespace

GeneratedRecord generate_record(const SyntheticCohortConfig& config, std::uint64_t subject_seed) {
  validate(config);
  Rng rng(subject_seed);
  RecordSpec spec = draw_subject(config, rng);
  spec.subject_id = "S" + std::to_string(subject_seed % 100000);
  spec.record_id = spec.subject_id + "_R1";
  return render_record(config, spec, subject_seed);
}

MaaResult maa_from_envelope(std::span<const double> pressures, std::span<const double> amplitudes,
                            double sys_ratio, double dia_ratio) {
  if (pressures.size() != amplitudes.size() || pressures.size() < 2) {
    throw Error(ErrorKind::InsufficientPulses, "envelope needs at least 2 matching samples");
  }
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < pressures.size(); ++i) pts.emplace_back(pressures[i], amplitudes[i]);
  std::sort(pts.begin(), pts.end());

  std::size_t m = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].second > pts[m].second) m = i;
  }
  const double peak = pts[m].second;

  // Walks from the peak in direction dir until the envelope drops to ratio * peak.
  auto crossing = [&](double ratio, int dir, const char* name) {
    const double level = ratio * peak;
    if (level >= peak) return pts[m].first;
    for (std::ptrdiff_t j = static_cast<std::ptrdiff_t>(m) + dir;
         j >= 0 && j < static_cast<std::ptrdiff_t>(pts.size()); j += dir) {
      const auto& [pj, aj] = pts[static_cast<std::size_t>(j)];
      if (aj <= level) {
        const auto& [pp, ap] = pts[static_cast<std::size_t>(j - dir)];
        if (ap == aj) return pj;
        return pp + (level - ap) * (pj - pp) / (aj - ap);
      }
    }
    throw Error(ErrorKind::RatioNotReached,
                std::string(name) + " ratio " + std::to_string(ratio) + " never reached");
  };

  MaaResult r;
  r.map = pts[m].first;
  r.sbp = crossing(sys_ratio, +1, "systolic");
  r.dbp = crossing(dia_ratio, -1, "diastolic");
  return r;
}

MaaResult maa_oracle(std::span<const signal::PulseSegment> pulses, std::span<const double> slow,
                     double sys_ratio, double dia_ratio) {
  std::vector<double> p, a;
  for (const auto& pulse : pulses) {
    if (pulse.is_outlier) continue;
    if (pulse.peak_index >= slow.size()) {
      throw Error(ErrorKind::Shape, "pulse peak outside the pressure trace");
    }
    p.push_back(slow[pulse.peak_index]);
    a.push_back(pulse.pulse_amp);
  }
  return maa_from_envelope(p, a, sys_ratio, dia_ratio);
}

Cohort generate_cohort(const SyntheticCohortConfig& config) {
  validate(config);
  Cohort cohort;
  for (std::size_t s = 0; s < config.n_subjects; ++s) {
    const auto subject_seed = derive_seed(config.seed, {kStreamSynth, s});
    Rng rng(subject_seed);
    const RecordSpec base = draw_subject(config, rng);
    char id[16];
    std::snprintf(id, sizeof id, "S%03zu", s + 1);
    for (std::size_t r = 0; r < config.records_per_subject; ++r) {
      RecordSpec spec = base;
      spec.subject_id = id;
      spec.record_id = std::string(id) + "_R" + std::to_string(r + 1);
      const double j = config.record_jitter;
      spec.sbp = std::clamp(base.sbp + rng.uniform(-j, j), config.sbp_range.lo, config.sbp_range.hi);
      const double dbp_hi = std::min(config.dbp_range.hi, spec.sbp - config.min_pulse_pressure);
      spec.dbp = std::clamp(base.dbp + rng.uniform(-j, j), config.dbp_range.lo, dbp_hi);
      auto gen = render_record(config, spec, derive_seed(subject_seed, {r}));
      cohort.records.push_back(std::move(gen.record));
      cohort.truth.push_back(std::move(gen.truth));
    }
  }
  return cohort;
}

void write_truth_csv(std::ostream& out, const Cohort& cohort) {
  out << "subject_id,record_id,sbp,dbp,map\n";
  for (std::size_t i = 0; i < cohort.records.size(); ++i) {
    const auto& r = cohort.records[i];
    const auto& t = cohort.truth[i];
    out << r.subject_id << ',' << r.record_id << ',' << text::format_double(t.sbp) << ','
        << text::format_double(t.dbp) << ',' << text::format_double(t.map) << '\n';
  }
}

}  // namespace oscbp::synth
