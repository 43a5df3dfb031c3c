#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oscbp/bp_model.hpp"
#include "oscbp/morpho_grid.hpp"
#include "oscbp/signal_prep.hpp"
#include "oscbp/synth.hpp"
#include "oscbp/trainer.hpp"

namespace oscbp::io {

namespace fs = std::filesystem;

/// Record file: first line holds subject_id,record_id,sampling_rate_hz,ref_sbp,ref_dbp,
/// then one sample (mmHg) per line. Errors cite 1-based line numbers. A positive
/// working_rate_hz resamples.
signal::CuffDeflationRecord parse_record(std::istream& in, const std::string& source,
                                         double working_rate_hz = 0.0);
signal::CuffDeflationRecord parse_record(const fs::path& path, double working_rate_hz = 0.0);
void write_record(std::ostream& out, const signal::CuffDeflationRecord& record);

struct RunConfig {
  std::uint64_t seed = 0;
  signal::SignalConfig signal;
  grid::GridConfig grid;
  std::string grid_format = "bin";  // bin | csv
  model::ModelConfig model;
  train::TrainingConfig training;
  std::size_t n_runs = 10;
  synth::SyntheticCohortConfig synth;

  /// Pushes the master seed into every module config.
  void apply_seed(std::uint64_t master);
};

/// Every key known to RunConfig, in dump order.
std::vector<std::string> run_config_keys();

/// Flat "key = value" lines; '#' starts a comment. Unknown keys and bad values throw.
RunConfig parse_run_config(std::istream& in, const std::string& source = "config");
RunConfig load_run_config(const fs::path& path);
void dump_run_config(std::ostream& out, const RunConfig& config);
/// Module-level checks plus cross-module consistency (grid size vs model input).
void validate(const RunConfig& config);

/// Preprocess and grid one record into a labelled training sample. Rejections of the
/// record (too short, too few pulses) propagate as oscbp::Error.
train::Sample make_sample(const signal::CuffDeflationRecord& record, const RunConfig& config);

enum class TargetSelection { SBP, DBP, Both };
TargetSelection parse_target_selection(std::string_view s);
std::vector<model::Target> targets(TargetSelection s);

struct CommandOptions {
  RunConfig config;
  fs::path out = "out";
  TargetSelection target = TargetSelection::Both;
  std::optional<fs::path> input;  // overrides the stage's default input location
};

/// Each command reads the previous stage's files under out (or input) and writes its own.
/// Messages go to log. All failures throw oscbp::Error.
void cmd_simulate(const CommandOptions& options, std::ostream& log);
void cmd_preprocess(const CommandOptions& options, std::ostream& log);
void cmd_represent(const CommandOptions& options, std::ostream& log);
void cmd_train(const CommandOptions& options, std::ostream& log);
void cmd_evaluate(const CommandOptions& options, std::ostream& log);
void cmd_report(const CommandOptions& options, std::ostream& log);

// Stage file formats, exposed for tests.

/// Header "subject_id,record_id,sampling_rate_hz,ref_sbp,ref_dbp,scale", then "omw,slow" rows.
struct WaveformFile {
  signal::CuffDeflationRecord meta;  // samples left empty
  double scale = 1.0;
  signal::OscillometricWaveform omw;
};
void write_waveform(std::ostream& out, const WaveformFile& w);
WaveformFile read_waveform(std::istream& in, const std::string& source);

void write_pulse_table(std::ostream& out, const std::vector<signal::PulseSegment>& pulses,
                       std::span<const double> slow);
std::vector<signal::PulseSegment> read_pulse_table(std::istream& in, const std::string& source);

}  // namespace oscbp::io
