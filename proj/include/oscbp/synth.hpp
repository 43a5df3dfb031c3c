#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "oscbp/signal_prep.hpp"

namespace oscbp::synth {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct SyntheticCohortConfig {
  std::size_t n_subjects = 20;
  std::size_t records_per_subject = 3;
  Range sbp_range{78.0, 199.0};
  Range dbp_range{36.0, 104.0};
  double min_pulse_pressure = 20.0;  // sbp - dbp lower bound
  Range heart_rate_range{60.0, 90.0};  // bpm
  double deflation_rate = 3.0;         // mmHg/s
  // Sub-MAP envelope width over supra-MAP width; > 1 widens the diastolic side.
  double envelope_asymmetry = 1.5;
  Range amplitude_range{0.8, 2.0};  // envelope maximum, mmHg
  double noise_sd = 0.0;            // mmHg
  double artifact_rate = 0.0;       // expected artifacts per record
  double sampling_rate = 100.0;
  double sys_ratio = 0.55;
  double dia_ratio = 0.75;
  double record_jitter = 3.0;  // +- mmHg around the subject's BP per record
  std::uint64_t seed = 0;
};

void validate(const SyntheticCohortConfig& config);

/// Asymmetric Gaussian pulse-amplitude envelope over cuff pressure.
struct Envelope {
  double map = 0.0;
  double amplitude = 1.0;
  double upper_width = 1.0;  // sigma above MAP
  double lower_width = 1.0;  // sigma below MAP

  double operator()(double pressure) const;
};

/// Places MAP and the two widths so that the envelope falls to sys_ratio at sbp
/// and to dia_ratio at dbp, with lower_width = asymmetry * upper_width.
Envelope envelope_for(double sbp, double dbp, double amplitude, double asymmetry,
                      double sys_ratio, double dia_ratio);

enum class ArtifactKind { AmplitudeScaled, DurationStretched };

struct SyntheticTruth {
  double sbp = 0.0;
  double dbp = 0.0;
  double map = 0.0;
  std::vector<double> beat_times;  // s, time of each beat's maximum
  std::vector<std::size_t> injected_artifact_indices;  // into beat_times
  std::vector<ArtifactKind> artifact_kinds;
  Envelope envelope;
};

/// Per-record physiological parameters.
struct RecordSpec {
  std::string subject_id;
  std::string record_id;
  double sbp = 120.0;
  double dbp = 80.0;
  double heart_rate = 72.0;
  double amplitude = 1.5;
};

struct GeneratedRecord {
  signal::CuffDeflationRecord record;
  SyntheticTruth truth;
};

/// Renders one recording. Noise and artifact placement draw from seed.
GeneratedRecord render_record(const SyntheticCohortConfig& config, const RecordSpec& spec,
                              std::uint64_t seed);

/// Draws a RecordSpec from subject_seed, then renders it with the same seed.
GeneratedRecord generate_record(const SyntheticCohortConfig& config, std::uint64_t subject_seed);

struct MaaResult {
  double sbp = 0.0;
  double dbp = 0.0;
  double map = 0.0;
};

/// Fixed-ratio estimate from envelope samples (any order). MAP is the pressure of the
/// largest amplitude; SBP/DBP are linearly interpolated ratio crossings above/below it.
MaaResult maa_from_envelope(std::span<const double> pressures, std::span<const double> amplitudes,
                            double sys_ratio, double dia_ratio);

/// Envelope from the non-outlier pulses, pressures read from the slow component at each peak.
MaaResult maa_oracle(std::span<const signal::PulseSegment> pulses, std::span<const double> slow,
                     double sys_ratio = 0.55, double dia_ratio = 0.75);

struct Cohort {
  std::vector<signal::CuffDeflationRecord> records;
  std::vector<SyntheticTruth> truth;
};

/// n_subjects x records_per_subject records. Subject s draws its BP from
/// derive_seed(seed, {synth, s}); record r jitters it by +-record_jitter.
Cohort generate_cohort(const SyntheticCohortConfig& config);

/// Columns: subject_id,record_id,sbp,dbp,map.
void write_truth_csv(std::ostream& out, const Cohort& cohort);

}  // namespace oscbp::synth
