#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace oscbp::signal {

/// Raw cuff pressure recorded during deflation, with reference labels.
struct CuffDeflationRecord {
  std::string subject_id;
  std::string record_id;
  double sampling_rate = 0.0;  // Hz
  std::vector<double> samples; // mmHg
  double ref_sbp = 0.0;
  double ref_dbp = 0.0;
};

/// Throws InvalidConfiguration / ShortRecord when the record breaks its invariants.
void validate(const CuffDeflationRecord& record);

/// Linear-interpolation resampling of a uniformly sampled series.
std::vector<double> resample_linear(std::span<const double> x, double fs_in, double fs_out);
CuffDeflationRecord resample_record(const CuffDeflationRecord& record, double fs_out);

/// Pulsatile component plus the slowly varying cuff pressure it rides on.
/// samples[i] + slow_component[i] reconstructs the record.
struct OscillometricWaveform {
  std::vector<double> samples;
  std::vector<double> slow_component;
  double sampling_rate = 0.0;
};

struct PulseSegment {
  std::size_t start_index = 0;  // trough opening the pulse
  std::size_t end_index = 0;    // trough closing the pulse (start of the next one)
  std::size_t peak_index = 0;
  std::size_t minimum_index = 0;  // inter-peak minimum M_i before the peak
  double peak_amp = 0.0;
  double trough_amp = 0.0;
  double pulse_amp = 0.0;
  double duration = 0.0;  // s
  bool trough_is_fallback = false;
  bool is_outlier = false;
};

// ---------------------------------------------------------------------------
// Butterworth filtering

/// One second-order section in direct form II transposed, a0 == 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

enum class FilterKind { LowPass, HighPass };

/// Digital Butterworth design via the bilinear transform with prewarping.
/// Odd orders end with a first-order section (b2 = a2 = 0).
std::vector<Biquad> butterworth(int order, double cutoff_hz, double fs, FilterKind kind);

/// Single forward pass with zero initial state.
std::vector<double> sosfilt(std::span<const Biquad> sos, std::span<const double> x);

/// Forward-backward filtering with odd extension of padlen samples at each end and
/// steady-state initial conditions, as in the common zero-phase recipe.
std::vector<double> filtfilt(std::span<const Biquad> sos, std::span<const double> x,
                             std::size_t padlen);

/// Magnitude response of the cascade at frequency f.
double magnitude_response(std::span<const Biquad> sos, double f, double fs);

// ---------------------------------------------------------------------------
// Pipeline stages

struct SignalConfig {
  double hp_cutoff_hz = 0.3;
  int hp_order = 4;
  double lp_cutoff_hz = 10.0;
  int lp_order = 4;
  double working_rate_hz = 100.0;
  double ampd_window_s = 6.0;
  double ampd_overlap = 0.5;
  double peak_dedup_s = 0.2;
  std::size_t trough_half_window = 5;
  double duration_tolerance_s = 0.3;
  double mz_threshold = 10.0;
};

void validate(const SignalConfig& config);

OscillometricWaveform split_components(const CuffDeflationRecord& record, double hp_cutoff_hz,
                                       int order = 4);

OscillometricWaveform denoise(const OscillometricWaveform& omw, double cutoff_hz = 10.0,
                              int order = 4);

/// Single-window automatic multiscale peak detection on a linearly detrended copy of x.
std::vector<std::size_t> ampd(std::span<const double> x);

struct PeakDetectionOptions {
  double overlap = 0.5;
  double dedup_s = 0.2;
};

/// Windowed AMPD. Throws InsufficientPulses when fewer than three peaks survive.
std::vector<std::size_t> detect_peaks(const OscillometricWaveform& omw, double window_s,
                                      PeakDetectionOptions options = {});

/// Amplitude threshold for a minimum/next-peak pair: 4 (P_next - M) / 5.
double trough_threshold(double next_peak, double minimum);

std::vector<PulseSegment> segment_pulses(const OscillometricWaveform& omw,
                                         std::span<const std::size_t> peaks,
                                         std::size_t half_window = 5);

double median(std::vector<double> values);

/// Modified z-scores 0.6745 (a - mean) / MAD. Empty when MAD == 0.
std::optional<std::vector<double>> modified_z_scores(std::span<const double> amplitudes);

struct OutlierRule {
  double duration_tolerance_s = 0.3;
  double mz_threshold = 10.0;
};

std::vector<PulseSegment> flag_outliers(std::vector<PulseSegment> pulses, OutlierRule rule = {});

struct NormalizedWaveform {
  OscillometricWaveform omw;
  std::vector<PulseSegment> pulses;
  double scale = 1.0;
};

NormalizedWaveform normalize_omw(const OscillometricWaveform& omw,
                                 std::vector<PulseSegment> pulses);

struct PreprocessResult {
  OscillometricWaveform omw;  // denoised, normalized
  std::vector<std::size_t> peaks;
  std::vector<PulseSegment> pulses;  // flagged, normalized
  double scale = 1.0;
};

/// Full chain: resample to the working rate, split, denoise, detect, segment, flag, normalize.
PreprocessResult preprocess(const CuffDeflationRecord& record, const SignalConfig& config = {});

}  // namespace oscbp::signal
