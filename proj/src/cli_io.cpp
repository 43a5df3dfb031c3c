#include "oscbp/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <type_traits>

#include "oscbp/error.hpp"
#include "oscbp/eval_reporting.hpp"
#include "oscbp/text.hpp"

namespace oscbp::io {

namespace {

[[noreturn]] void parse_error(const std::string& source, std::size_t line, const std::string& msg) {
  throw Error(ErrorKind::Parse, source + ":" + std::to_string(line) + ": " + msg);
}

double require_double(std::string_view s, const std::string& source, std::size_t line,
                      const char* what) {
  const auto v = text::parse_double(s);
  if (!v || !std::isfinite(*v)) {
    parse_error(source, line, std::string("bad ") + what + " '" + std::string(s) + "'");
  }
  return *v;
}

std::size_t require_index(std::string_view s, const std::string& source, std::size_t line,
                          const char* what) {
  const auto v = text::parse_int(s);
  if (!v || *v < 0) {
    parse_error(source, line, std::string("bad ") + what + " '" + std::string(s) + "'");
  }
  return static_cast<std::size_t>(*v);
}

bool require_flag(std::string_view s, const std::string& source, std::size_t line,
                  const char* what) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  parse_error(source, line, std::string("bad ") + what + " '" + std::string(s) + "'");
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  return in;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
  body(out);
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

std::vector<fs::path> files_with_suffix(const fs::path& dir, const std::string& suffix) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "missing directory '" + dir.string() + "'");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.size() > suffix.size() && name.ends_with(suffix)) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// True for errors that reject one record without invalidating the stage.
bool is_record_rejection(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::ShortRecord:
    case ErrorKind::InsufficientPulses:
    case ErrorKind::DegenerateWaveform:
    case ErrorKind::DegeneratePulse:
      return true;
    default:
      return false;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Record files

signal::CuffDeflationRecord parse_record(std::istream& in, const std::string& source,
                                         double working_rate_hz) {
  std::string line;
  if (!std::getline(in, line)) parse_error(source, 1, "missing header");
  const auto h = text::split(line);
  if (h.size() != 5) {
    parse_error(source, 1, "header needs 5 fields "
                           "(subject_id,record_id,sampling_rate_hz,ref_sbp,ref_dbp), got " +
                               std::to_string(h.size()));
  }
  if (h[0].empty() || h[1].empty()) parse_error(source, 1, "empty subject_id or record_id");
  signal::CuffDeflationRecord r;
  r.subject_id = h[0];
  r.record_id = h[1];
  r.sampling_rate = require_double(h[2], source, 1, "sampling_rate_hz");
  r.ref_sbp = require_double(h[3], source, 1, "ref_sbp");
  r.ref_dbp = require_double(h[4], source, 1, "ref_dbp");
  if (r.sampling_rate <= 0) parse_error(source, 1, "sampling_rate_hz must be positive");
  if (!(r.ref_sbp > r.ref_dbp && r.ref_dbp > 0)) {
    parse_error(source, 1, "need ref_sbp > ref_dbp > 0");
  }

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = text::trim(line);
    if (t.empty()) continue;
    r.samples.push_back(require_double(t, source, lineno, "sample"));
  }
  const auto needed = static_cast<std::size_t>(std::ceil(10.0 * r.sampling_rate));
  if (r.samples.size() < needed) {
    parse_error(source, lineno,
                "record has " + std::to_string(r.samples.size()) + " samples, needs at least " +
                    std::to_string(needed) + " (10 s)");
  }
  signal::validate(r);
  if (working_rate_hz > 0 && working_rate_hz != r.sampling_rate) {
    r = signal::resample_record(r, working_rate_hz);
  }
  return r;
}

signal::CuffDeflationRecord parse_record(const fs::path& path, double working_rate_hz) {
  auto in = open_in(path);
  return parse_record(in, path.string(), working_rate_hz);
}

void write_record(std::ostream& out, const signal::CuffDeflationRecord& r) {
  out << r.subject_id << ',' << r.record_id << ',' << text::format_double(r.sampling_rate) << ','
      << text::format_double(r.ref_sbp) << ',' << text::format_double(r.ref_dbp) << '\n';
  for (double v : r.samples) out << text::format_double(v) << '\n';
}

// ---------------------------------------------------------------------------
// RunConfig

namespace {

void parse_value(std::string_view s, double& v) {
  const auto p = text::parse_double(s);
  if (!p || !std::isfinite(*p)) throw std::invalid_argument("expected a number");
  v = *p;
}
void parse_value(std::string_view s, int& v) {
  const auto p = text::parse_int(s);
  if (!p) throw std::invalid_argument("expected an integer");
  v = static_cast<int>(*p);
}
static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seed and counts share a parser");

void parse_value(std::string_view s, std::size_t& v) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("expected a non-negative integer");
  }
}
void parse_value(std::string_view s, bool& v) {
  if (s == "1" || s == "true") v = true;
  else if (s == "0" || s == "false") v = false;
  else throw std::invalid_argument("expected true/false");
}
void parse_value(std::string_view s, std::string& v) { v = std::string(s); }
void parse_value(std::string_view s, std::vector<std::size_t>& v) {
  v.clear();
  if (s.empty()) return;
  for (const auto& f : text::split(s)) {
    std::size_t x = 0;
    parse_value(f, x);
    v.push_back(x);
  }
}
void parse_value(std::string_view s, train::Optimizer& v) { v = train::parse_optimizer(s); }

std::string format_value(double v) { return text::format_double(v); }
std::string format_value(int v) { return std::to_string(v); }
std::string format_value(std::size_t v) { return std::to_string(v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::string& v) { return v; }
std::string format_value(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}
std::string format_value(train::Optimizer v) { return train::to_string(v); }

struct Entry {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Access>
Entry entry(std::string key, Access access) {
  return {std::move(key),
          [access](RunConfig& c, std::string_view s) { parse_value(s, access(c)); },
          [access](const RunConfig& c) {
            return format_value(access(const_cast<RunConfig&>(c)));
          }};
}

#define OSCBP_KEY(name, member) entry(name, [](RunConfig& c) -> auto& { return c.member; })

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries{
      OSCBP_KEY("seed", seed),
      OSCBP_KEY("signal.hp_cutoff_hz", signal.hp_cutoff_hz),
      OSCBP_KEY("signal.hp_order", signal.hp_order),
      OSCBP_KEY("signal.lp_cutoff_hz", signal.lp_cutoff_hz),
      OSCBP_KEY("signal.lp_order", signal.lp_order),
      OSCBP_KEY("signal.working_rate_hz", signal.working_rate_hz),
      OSCBP_KEY("signal.ampd_window_s", signal.ampd_window_s),
      OSCBP_KEY("signal.ampd_overlap", signal.ampd_overlap),
      OSCBP_KEY("signal.peak_dedup_s", signal.peak_dedup_s),
      OSCBP_KEY("signal.trough_half_window", signal.trough_half_window),
      OSCBP_KEY("signal.duration_tolerance_s", signal.duration_tolerance_s),
      OSCBP_KEY("signal.mz_threshold", signal.mz_threshold),
      OSCBP_KEY("grid.p_min", grid.p_min),
      OSCBP_KEY("grid.p_max", grid.p_max),
      OSCBP_KEY("grid.rows", grid.rows),
      OSCBP_KEY("grid.clamp_extrapolation", grid.clamp_extrapolation),
      OSCBP_KEY("grid.format", grid_format),
      OSCBP_KEY("model.n_kernels", model.n_kernels),
      OSCBP_KEY("model.kernel_width", model.kernel_width),
      OSCBP_KEY("model.lstm_layers", model.lstm_layers),
      OSCBP_KEY("model.lstm_hidden", model.lstm_hidden),
      OSCBP_KEY("model.dense_widths", model.dense_widths),
      OSCBP_KEY("model.grid_size", model.grid_size),
      OSCBP_KEY("model.reverse_time", model.reverse_time),
      OSCBP_KEY("train.initial_lr", training.initial_lr),
      OSCBP_KEY("train.lr_patience", training.lr_patience),
      OSCBP_KEY("train.lr_factor", training.lr_factor),
      OSCBP_KEY("train.early_stop_patience", training.early_stop_patience),
      OSCBP_KEY("train.l1_lambda", training.l1_lambda),
      OSCBP_KEY("train.max_epochs", training.max_epochs),
      OSCBP_KEY("train.optimizer", training.optimizer),
      OSCBP_KEY("train.adam_beta1", training.adam_beta1),
      OSCBP_KEY("train.adam_beta2", training.adam_beta2),
      OSCBP_KEY("train.adam_epsilon", training.adam_epsilon),
      OSCBP_KEY("train.standardize_targets", training.standardize_targets),
      OSCBP_KEY("train.n_runs", n_runs),
      OSCBP_KEY("synth.n_subjects", synth.n_subjects),
      OSCBP_KEY("synth.records_per_subject", synth.records_per_subject),
      OSCBP_KEY("synth.sbp_min", synth.sbp_range.lo),
      OSCBP_KEY("synth.sbp_max", synth.sbp_range.hi),
      OSCBP_KEY("synth.dbp_min", synth.dbp_range.lo),
      OSCBP_KEY("synth.dbp_max", synth.dbp_range.hi),
      OSCBP_KEY("synth.min_pulse_pressure", synth.min_pulse_pressure),
      OSCBP_KEY("synth.hr_min", synth.heart_rate_range.lo),
      OSCBP_KEY("synth.hr_max", synth.heart_rate_range.hi),
      OSCBP_KEY("synth.deflation_rate", synth.deflation_rate),
      OSCBP_KEY("synth.envelope_asymmetry", synth.envelope_asymmetry),
      OSCBP_KEY("synth.amplitude_min", synth.amplitude_range.lo),
      OSCBP_KEY("synth.amplitude_max", synth.amplitude_range.hi),
      OSCBP_KEY("synth.noise_sd", synth.noise_sd),
      OSCBP_KEY("synth.artifact_rate", synth.artifact_rate),
      OSCBP_KEY("synth.sampling_rate", synth.sampling_rate),
      OSCBP_KEY("synth.sys_ratio", synth.sys_ratio),
      OSCBP_KEY("synth.dia_ratio", synth.dia_ratio),
      OSCBP_KEY("synth.record_jitter", synth.record_jitter),
  };
  return entries;
}

#undef OSCBP_KEY

}  // namespace

void RunConfig::apply_seed(std::uint64_t master) {
  seed = master;
  synth.seed = master;
  training.seed = master;
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : registry()) keys.push_back(e.key);
  return keys;
}

RunConfig parse_run_config(std::istream& in, const std::string& source) {
  RunConfig c;
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view body = line;
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = text::trim(body);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) parse_error(source, lineno, "expected key = value");
    const std::string key(text::trim(body.substr(0, eq)));
    const auto value = text::trim(body.substr(eq + 1));
    const auto& reg = registry();
    const auto it = std::find_if(reg.begin(), reg.end(), [&](const Entry& e) { return e.key == key; });
    if (it == reg.end()) parse_error(source, lineno, "unknown key '" + key + "'");
    if (const auto [prev, fresh] = seen.emplace(key, lineno); !fresh) {
      parse_error(source, lineno,
                  "duplicate key '" + key + "' (first on line " + std::to_string(prev->second) + ")");
    }
    try {
      it->set(c, value);
    } catch (const std::exception& e) {
      parse_error(source, lineno, key + ": " + e.what());
    }
  }
  c.apply_seed(c.seed);
  validate(c);
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  auto in = open_in(path);
  return parse_run_config(in, path.string());
}

void dump_run_config(std::ostream& out, const RunConfig& config) {
  for (const auto& e : registry()) out << e.key << " = " << e.get(config) << '\n';
}

void validate(const RunConfig& c) {
  signal::validate(c.signal);
  grid::validate(c.grid);
  model::validate(c.model);
  train::validate(c.training);
  synth::validate(c.synth);
  if (c.grid_format != "bin" && c.grid_format != "csv") {
    throw Error(ErrorKind::InvalidConfiguration, "grid.format must be bin or csv");
  }
  if (c.n_runs == 0) throw Error(ErrorKind::InvalidConfiguration, "train.n_runs must be positive");
  if (c.grid.rows != c.model.grid_size || c.grid.columns() != c.model.grid_size) {
    throw Error(ErrorKind::InvalidConfiguration,
                "grid is " + std::to_string(c.grid.rows) + "x" + std::to_string(c.grid.columns()) +
                    " but model.grid_size is " + std::to_string(c.model.grid_size));
  }
}

train::Sample make_sample(const signal::CuffDeflationRecord& record, const RunConfig& config) {
  const auto res = signal::preprocess(record, config.signal);
  const auto g = grid::build_grid(res.pulses, res.omw.samples, res.omw.slow_component, config.grid);
  return {record.subject_id, record.record_id, g.values, record.ref_sbp, record.ref_dbp};
}

TargetSelection parse_target_selection(std::string_view s) {
  if (s == "sbp" || s == "SBP") return TargetSelection::SBP;
  if (s == "dbp" || s == "DBP") return TargetSelection::DBP;
  if (s == "both") return TargetSelection::Both;
  throw Error(ErrorKind::InvalidConfiguration, "target must be sbp, dbp or both");
}

std::vector<model::Target> targets(TargetSelection s) {
  switch (s) {
    case TargetSelection::SBP: return {model::Target::SBP};
    case TargetSelection::DBP: return {model::Target::DBP};
    case TargetSelection::Both: break;
  }
  return {model::Target::SBP, model::Target::DBP};
}

// ---------------------------------------------------------------------------
// Stage files

void write_waveform(std::ostream& out, const WaveformFile& w) {
  const auto& m = w.meta;
  out << m.subject_id << ',' << m.record_id << ',' << text::format_double(w.omw.sampling_rate)
      << ',' << text::format_double(m.ref_sbp) << ',' << text::format_double(m.ref_dbp) << ','
      << text::format_double(w.scale) << '\n';
  for (std::size_t i = 0; i < w.omw.samples.size(); ++i) {
    out << text::format_double(w.omw.samples[i]) << ','
        << text::format_double(w.omw.slow_component[i]) << '\n';
  }
}

WaveformFile read_waveform(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) parse_error(source, 1, "missing header");
  const auto h = text::split(line);
  if (h.size() != 6) parse_error(source, 1, "waveform header needs 6 fields");
  WaveformFile w;
  w.meta.subject_id = h[0];
  w.meta.record_id = h[1];
  w.omw.sampling_rate = require_double(h[2], source, 1, "sampling_rate_hz");
  w.meta.sampling_rate = w.omw.sampling_rate;
  w.meta.ref_sbp = require_double(h[3], source, 1, "ref_sbp");
  w.meta.ref_dbp = require_double(h[4], source, 1, "ref_dbp");
  w.scale = require_double(h[5], source, 1, "scale");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line);
    if (f.size() != 2) parse_error(source, lineno, "expected omw,slow");
    w.omw.samples.push_back(require_double(f[0], source, lineno, "omw"));
    w.omw.slow_component.push_back(require_double(f[1], source, lineno, "slow"));
  }
  return w;
}

namespace {
constexpr const char* kPulseHeader =
    "start_index,end_index,peak_index,minimum_index,peak_amp,trough_amp,pulse_amp,duration_s,"
    "pressure_mmHg,trough_fallback,is_outlier";
}

void write_pulse_table(std::ostream& out, const std::vector<signal::PulseSegment>& pulses,
                       std::span<const double> slow) {
  out << kPulseHeader << '\n';
  for (const auto& p : pulses) {
    out << p.start_index << ',' << p.end_index << ',' << p.peak_index << ',' << p.minimum_index
        << ',' << text::format_double(p.peak_amp) << ',' << text::format_double(p.trough_amp)
        << ',' << text::format_double(p.pulse_amp) << ',' << text::format_double(p.duration)
        << ',' << text::format_double(grid::pulse_pressure(p, slow)) << ','
        << (p.trough_is_fallback ? 1 : 0) << ',' << (p.is_outlier ? 1 : 0) << '\n';
  }
}

std::vector<signal::PulseSegment> read_pulse_table(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != kPulseHeader) {
    parse_error(source, 1, "unexpected pulse table header");
  }
  std::vector<signal::PulseSegment> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line);
    if (f.size() != 11) parse_error(source, lineno, "expected 11 fields");
    signal::PulseSegment p;
    p.start_index = require_index(f[0], source, lineno, "start_index");
    p.end_index = require_index(f[1], source, lineno, "end_index");
    p.peak_index = require_index(f[2], source, lineno, "peak_index");
    p.minimum_index = require_index(f[3], source, lineno, "minimum_index");
    p.peak_amp = require_double(f[4], source, lineno, "peak_amp");
    p.trough_amp = require_double(f[5], source, lineno, "trough_amp");
    p.pulse_amp = require_double(f[6], source, lineno, "pulse_amp");
    p.duration = require_double(f[7], source, lineno, "duration_s");
    p.trough_is_fallback = require_flag(f[9], source, lineno, "trough_fallback");
    p.is_outlier = require_flag(f[10], source, lineno, "is_outlier");
    if (!(p.start_index <= p.peak_index && p.peak_index <= p.end_index)) {
      parse_error(source, lineno, "pulse indices out of order");
    }
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

fs::path records_dir(const fs::path& out) { return out / "records"; }
fs::path prep_dir(const fs::path& out) { return out / "prep"; }
fs::path grids_dir(const fs::path& out) { return out / "grids"; }
fs::path train_dir(const fs::path& out) { return out / "train"; }
fs::path eval_dir(const fs::path& out) { return out / "eval"; }

std::string lower(model::Target t) { return t == model::Target::SBP ? "sbp" : "dbp"; }

}  // namespace

void cmd_simulate(const CommandOptions& o, std::ostream& log) {
  validate(o.config);
  const auto cohort = synth::generate_cohort(o.config.synth);
  const auto dir = records_dir(o.out);
  fs::create_directories(dir);
  for (const auto& r : cohort.records) {
    write_file(dir / (r.record_id + ".csv"), [&](std::ostream& out) { write_record(out, r); });
  }
  write_file(o.out / "truth.csv", [&](std::ostream& out) { synth::write_truth_csv(out, cohort); });
  log << "simulate: " << cohort.records.size() << " records from " << o.config.synth.n_subjects
      << " subjects -> " << dir.string() << '\n';
}

void cmd_preprocess(const CommandOptions& o, std::ostream& log) {
  validate(o.config);
  const auto in_dir = o.input.value_or(records_dir(o.out));
  const auto files = files_with_suffix(in_dir, ".csv");
  if (files.empty()) throw Error(ErrorKind::Io, "no record files in '" + in_dir.string() + "'");
  const auto dir = prep_dir(o.out);
  fs::create_directories(dir);

  std::ostringstream qc;
  qc << "subject_id,record_id,status,n_peaks,n_pulses,n_outliers,n_fallback_troughs,scale\n";
  std::size_t accepted = 0;
  for (const auto& path : files) {
    const auto record = parse_record(path, o.config.signal.working_rate_hz);
    try {
      const auto res = signal::preprocess(record, o.config.signal);
      const auto n_out = std::count_if(res.pulses.begin(), res.pulses.end(),
                                       [](const auto& p) { return p.is_outlier; });
      const auto n_fb = std::count_if(res.pulses.begin(), res.pulses.end(),
                                      [](const auto& p) { return p.trough_is_fallback; });
      WaveformFile w{record, res.scale, res.omw};
      w.meta.samples.clear();
      write_file(dir / (record.record_id + ".waveform.csv"),
                 [&](std::ostream& out) { write_waveform(out, w); });
      write_file(dir / (record.record_id + ".pulses.csv"), [&](std::ostream& out) {
        write_pulse_table(out, res.pulses, res.omw.slow_component);
      });
      qc << record.subject_id << ',' << record.record_id << ",ok," << res.peaks.size() << ','
         << res.pulses.size() << ',' << n_out << ',' << n_fb << ','
         << text::format_double(res.scale) << '\n';
      ++accepted;
    } catch (const Error& e) {
      if (!is_record_rejection(e)) throw;
      log << "preprocess: rejected " << record.record_id << ": " << e.what() << '\n';
      qc << record.subject_id << ',' << record.record_id << ",rejected,0,0,0,0,0\n";
    }
  }
  write_file(dir / "qc.csv", [&](std::ostream& out) { out << qc.str(); });
  if (accepted == 0) throw Error(ErrorKind::InsufficientData, "every record was rejected");
  log << "preprocess: " << accepted << " of " << files.size() << " records -> " << dir.string()
      << '\n';
}

void cmd_represent(const CommandOptions& o, std::ostream& log) {
  validate(o.config);
  const auto in_dir = o.input.value_or(prep_dir(o.out));
  const auto files = files_with_suffix(in_dir, ".waveform.csv");
  if (files.empty()) throw Error(ErrorKind::Io, "no waveform files in '" + in_dir.string() + "'");
  const auto dir = grids_dir(o.out);
  fs::create_directories(dir);
  const bool binary = o.config.grid_format == "bin";

  std::ostringstream labels, index;
  labels << "subject_id,record_id,ref_sbp,ref_dbp,file\n";
  index << "record_id,n_original,n_interpolated,n_extrapolated\n";
  std::size_t written = 0;
  for (const auto& wpath : files) {
    auto win = open_in(wpath);
    const auto w = read_waveform(win, wpath.string());
    const auto stem = wpath.filename().string();
    const auto ppath = wpath.parent_path() / (stem.substr(0, stem.size() - 13) + ".pulses.csv");
    auto pin = open_in(ppath);
    const auto pulses = read_pulse_table(pin, ppath.string());
    grid::MorphoTemporalGrid g;
    try {
      g = grid::build_grid(pulses, w.omw.samples, w.omw.slow_component, o.config.grid);
    } catch (const Error& e) {
      if (!is_record_rejection(e)) throw;
      log << "represent: skipped " << w.meta.record_id << ": " << e.what() << '\n';
      continue;
    }
    const grid::GridHeader header{w.meta.subject_id, w.meta.record_id, o.config.grid.p_min,
                                  o.config.grid.p_max};
    const auto name = w.meta.record_id + (binary ? ".grid" : ".grid.csv");
    write_file(dir / name, [&](std::ostream& out) {
      if (binary) grid::write_grid_binary(out, header, g);
      else grid::write_grid_csv(out, header, g);
    });
    std::array<std::size_t, 3> counts{};
    for (auto src : g.provenance) ++counts[static_cast<std::size_t>(src)];
    labels << w.meta.subject_id << ',' << w.meta.record_id << ','
           << text::format_double(w.meta.ref_sbp) << ',' << text::format_double(w.meta.ref_dbp)
           << ',' << name << '\n';
    index << w.meta.record_id << ',' << counts[0] << ',' << counts[1] << ',' << counts[2] << '\n';
    ++written;
  }
  write_file(dir / "labels.csv", [&](std::ostream& out) { out << labels.str(); });
  write_file(dir / "index.csv", [&](std::ostream& out) { out << index.str(); });
  if (written == 0) throw Error(ErrorKind::InsufficientData, "no grid could be built");
  log << "represent: " << written << " grids -> " << dir.string() << '\n';
}

namespace {

train::Dataset load_dataset(const fs::path& dir, std::size_t grid_size) {
  const auto lpath = dir / "labels.csv";
  auto in = open_in(lpath);
  std::string line;
  std::getline(in, line);
  train::Dataset data;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line);
    if (f.size() != 5) parse_error(lpath.string(), lineno, "expected 5 fields");
    train::Sample s;
    s.subject_id = f[0];
    s.record_id = f[1];
    s.sbp = require_double(f[2], lpath.string(), lineno, "ref_sbp");
    s.dbp = require_double(f[3], lpath.string(), lineno, "ref_dbp");
    auto gin = open_in(dir / f[4]);
    const auto loaded = f[4].ends_with(".csv") ? grid::read_grid_csv(gin) : grid::read_grid_binary(gin);
    if (loaded.grid.rows != grid_size || loaded.grid.cols != grid_size) {
      throw Error(ErrorKind::Shape, f[4] + ": grid is " + std::to_string(loaded.grid.rows) + "x" +
                                        std::to_string(loaded.grid.cols) + ", model expects " +
                                        std::to_string(grid_size));
    }
    s.grid = loaded.grid.values;
    data.push_back(std::move(s));
  }
  if (data.empty()) throw Error(ErrorKind::InsufficientData, "no labelled grids in " + lpath.string());
  return data;
}

}  // namespace

void cmd_train(const CommandOptions& o, std::ostream& log) {
  validate(o.config);
  const auto data = load_dataset(o.input.value_or(grids_dir(o.out)), o.config.model.grid_size);
  const auto dir = train_dir(o.out);
  fs::create_directories(dir / "checkpoints");
  fs::create_directories(dir / "history");
  write_file(dir / "run_config.txt", [&](std::ostream& out) { dump_run_config(out, o.config); });

  std::vector<train::PredictionRow> all;
  for (const auto t : targets(o.target)) {
    auto tc = o.config.training;
    tc.target = t;
    const auto tag = lower(t);
    auto on_fold = [&](const train::FoldOutcome& f) {
      const auto stem = tag + "_run" + std::to_string(f.run) + "_fold" + std::to_string(f.fold.fold_id);
      write_file(dir / "checkpoints" / (stem + ".ckpt"),
                 [&](std::ostream& out) { model::save_model(out, f.model, t); });
      write_file(dir / "history" / (stem + ".csv"),
                 [&](std::ostream& out) { train::write_history_csv(out, f.history); });
      log << "train: " << tag << " run " << f.run << " fold " << f.fold.fold_id << " ("
          << f.fold.test_subject << ") best epoch " << f.history.best_epoch << '\n';
    };
    auto rows = train::run_experiment(data, o.config.model, tc, o.config.n_runs, on_fold);
    all.insert(all.end(), rows.begin(), rows.end());
  }
  write_file(dir / "predictions.csv",
             [&](std::ostream& out) { train::write_predictions_csv(out, all); });
  log << "train: " << all.size() << " predictions -> " << (dir / "predictions.csv").string() << '\n';
}

void cmd_evaluate(const CommandOptions& o, std::ostream& log) {
  const auto path = o.input.value_or(train_dir(o.out) / "predictions.csv");
  auto in = open_in(path);
  const auto table = train::read_predictions_csv(in);
  const auto reports = eval::aggregate_runs(table);
  const auto dir = eval_dir(o.out);
  write_file(dir / "report.json", [&](std::ostream& out) { eval::write_reports_json(out, reports); });
  write_file(dir / "report.csv", [&](std::ostream& out) { eval::write_reports_csv(out, reports); });

  // Bland-Altman pairs use each record's prediction averaged over runs.
  for (const auto& rep : reports) {
    std::map<std::pair<std::string, std::string>, std::pair<double, double>> sums;  // sum, ref
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const auto& r : table) {
      if (r.target != rep.target) continue;
      const auto key = std::make_pair(r.subject_id, r.record_id);
      sums[key].first += r.prediction;
      sums[key].second = r.reference;
      ++counts[key];
    }
    std::vector<double> est, ref;
    for (const auto& [key, s] : sums) {
      est.push_back(s.first / static_cast<double>(counts[key]));
      ref.push_back(s.second);
    }
    const auto ba = eval::bland_altman(est, ref);
    write_file(dir / ("bland_altman_" + lower(rep.target) + ".csv"),
               [&](std::ostream& out) { eval::write_bland_altman_csv(out, ba); });
  }
  eval::write_summary(log, reports);
}

void cmd_report(const CommandOptions& o, std::ostream& log) {
  const auto path = o.input.value_or(eval_dir(o.out) / "report.json");
  auto in = open_in(path);
  const auto reports = eval::read_reports_json(in);
  if (reports.empty()) throw Error(ErrorKind::InsufficientData, "report has no targets");
  write_file(eval_dir(o.out) / "summary.txt",
             [&](std::ostream& out) { eval::write_summary(out, reports); });
  eval::write_summary(log, reports);
}

}  // namespace oscbp::io
