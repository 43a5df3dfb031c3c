#include "oscbp/morpho_grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "oscbp/error.hpp"
#include "oscbp/text.hpp"

namespace oscbp::grid {

void validate(const GridConfig& c) {
  if (c.p_max - c.p_min < 2) {
    throw Error(ErrorKind::InvalidConfiguration, "grid needs p_max - p_min >= 2");
  }
  if (c.rows < 2) throw Error(ErrorKind::InvalidConfiguration, "grid needs at least 2 rows");
}

std::vector<double> MorphoTemporalGrid::column(std::size_t c) const {
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = at(r, c);
  return out;
}

double pulse_pressure(const signal::PulseSegment& pulse, std::span<const double> slow) {
  if (pulse.peak_index >= slow.size()) {
    throw Error(ErrorKind::Shape, "pulse peak index outside the pressure trace");
  }
  return slow[pulse.peak_index];
}

std::vector<double> resample_pulse(std::span<const double> pulse, std::size_t n) {
  if (pulse.size() < 2) {
    throw Error(ErrorKind::DegeneratePulse, "pulse needs at least 2 samples to resample");
  }
  if (n < 2) throw Error(ErrorKind::InvalidConfiguration, "resample length must be >= 2");
  if (pulse.size() == n) return {pulse.begin(), pulse.end()};

  std::vector<double> out(n);
  const std::size_t last = pulse.size() - 1;
  const double step = static_cast<double>(last) / static_cast<double>(n - 1);
  out.front() = pulse.front();
  out.back() = pulse.back();
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double pos = static_cast<double>(i) * step;
    const auto lo = std::min(static_cast<std::size_t>(pos), last - 1);
    const double frac = pos - static_cast<double>(lo);
    out[i] = pulse[lo] * (1.0 - frac) + pulse[lo + 1] * frac;
  }
  return out;
}

std::size_t column_for_pressure(double pressure, const GridConfig& config) {
  const double first = config.p_min + 1.0;
  // Nearest integer, halves rounded toward the lower pressure.
  const double offset = std::ceil(pressure - first - 0.5);
  const double last = static_cast<double>(config.columns() - 1);
  return static_cast<std::size_t>(std::clamp(offset, 0.0, last));
}

MorphoTemporalGrid build_grid(std::span<const signal::PulseSegment> pulses,
                              std::span<const double> omw, std::span<const double> slow,
                              const GridConfig& config) {
  validate(config);
  if (omw.size() != slow.size()) {
    throw Error(ErrorKind::Shape, "waveform and pressure trace lengths differ");
  }
  const std::size_t rows = config.rows;
  const std::size_t cols = config.columns();

  MorphoTemporalGrid g;
  g.rows = rows;
  g.cols = cols;
  g.values.assign(rows * cols, 0.0);
  g.column_pressure.resize(cols);
  for (std::size_t c = 0; c < cols; ++c) g.column_pressure[c] = config.p_min + 1.0 + c;
  g.provenance.assign(cols, ColumnSource::Interpolated);

  std::vector<std::size_t> hits(cols, 0);
  std::size_t used = 0;
  for (const auto& p : pulses) {
    if (p.is_outlier) continue;
    if (p.end_index >= omw.size() || p.start_index >= p.end_index) {
      throw Error(ErrorKind::Shape, "pulse bounds outside the waveform");
    }
    const auto shape = resample_pulse(
        omw.subspan(p.start_index, p.end_index - p.start_index + 1), rows);
    const std::size_t c = column_for_pressure(pulse_pressure(p, slow), config);
    for (std::size_t r = 0; r < rows; ++r) g.at(r, c) += shape[r];
    ++hits[c];
    ++used;
  }
  if (used < 2) {
    throw Error(ErrorKind::InsufficientPulses,
                "grid needs at least 2 non-outlier pulses, got " + std::to_string(used));
  }

  std::vector<std::size_t> originals;
  for (std::size_t c = 0; c < cols; ++c) {
    if (hits[c] == 0) continue;
    originals.push_back(c);
    g.provenance[c] = ColumnSource::Original;
    if (hits[c] > 1) {
      const auto k = static_cast<double>(hits[c]);
      for (std::size_t r = 0; r < rows; ++r) g.at(r, c) /= k;
    }
  }
  if (originals.size() < 2) {
    throw Error(ErrorKind::InsufficientPulses,
                "all pulses fall in one pressure column; extrapolation needs two anchors");
  }

  // Row-wise line through anchors a and b evaluated at column c.
  auto fill = [&](std::size_t c, std::size_t a, std::size_t b) {
    const double ca = static_cast<double>(a), cb = static_cast<double>(b);
    const double cc = static_cast<double>(c);
    const double span = cb - ca;
    for (std::size_t r = 0; r < rows; ++r) {
      g.at(r, c) = (g.at(r, a) * (cb - cc) + g.at(r, b) * (cc - ca)) / span;
    }
  };

  for (std::size_t i = 0; i + 1 < originals.size(); ++i) {
    for (std::size_t c = originals[i] + 1; c < originals[i + 1]; ++c) {
      fill(c, originals[i], originals[i + 1]);
    }
  }
  const std::size_t first = originals[0], second = originals[1];
  const std::size_t last = originals.back(), penult = originals[originals.size() - 2];
  for (std::size_t c = 0; c < first; ++c) {
    fill(c, first, second);
    g.provenance[c] = ColumnSource::Extrapolated;
  }
  for (std::size_t c = last + 1; c < cols; ++c) {
    fill(c, penult, last);
    g.provenance[c] = ColumnSource::Extrapolated;
  }

  if (config.clamp_extrapolation) {
    for (std::size_t r = 0; r < rows; ++r) {
      double lo = g.at(r, first), hi = lo;
      for (std::size_t c : originals) {
        lo = std::min(lo, g.at(r, c));
        hi = std::max(hi, g.at(r, c));
      }
      for (std::size_t c = 0; c < cols; ++c) {
        if (g.provenance[c] == ColumnSource::Extrapolated) {
          g.at(r, c) = std::clamp(g.at(r, c), lo, hi);
        }
      }
    }
  }
  return g;
}

namespace {

void write_header(std::ostream& out, const GridHeader& h) {
  out << h.subject_id << ',' << h.record_id << ',' << h.p_min << ',' << h.p_max << '\n';
}

GridHeader read_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Parse, "grid: missing header line");
  const auto f = text::split(line);
  if (f.size() != 4) throw Error(ErrorKind::Parse, "grid: header needs 4 fields");
  const auto lo = text::parse_int(f[2]);
  const auto hi = text::parse_int(f[3]);
  if (f[0].empty() || f[1].empty() || !lo || !hi || *hi - *lo < 2) {
    throw Error(ErrorKind::Parse, "grid: malformed header '" + line + "'");
  }
  return {f[0], f[1], static_cast<int>(*lo), static_cast<int>(*hi)};
}

MorphoTemporalGrid empty_grid(const GridHeader& h, std::size_t rows) {
  MorphoTemporalGrid g;
  g.cols = static_cast<std::size_t>(h.p_max - h.p_min);
  g.rows = rows;
  g.values.assign(rows * g.cols, 0.0);
  for (std::size_t c = 0; c < g.cols; ++c) g.column_pressure.push_back(h.p_min + 1.0 + c);
  return g;
}

}  // namespace

void write_grid_csv(std::ostream& out, const GridHeader& header, const MorphoTemporalGrid& grid) {
  write_header(out, header);
  for (std::size_t c = 0; c < grid.cols; ++c) {
    for (std::size_t r = 0; r < grid.rows; ++r) {
      if (r) out << ',';
      out << text::format_double(grid.at(r, c));
    }
    out << '\n';
  }
}

void write_grid_binary(std::ostream& out, const GridHeader& header,
                       const MorphoTemporalGrid& grid) {
  static_assert(std::endian::native == std::endian::little, "little-endian host expected");
  write_header(out, header);
  for (std::size_t c = 0; c < grid.cols; ++c) {
    for (std::size_t r = 0; r < grid.rows; ++r) {
      const double v = grid.at(r, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
}

LoadedGrid read_grid_csv(std::istream& in) {
  LoadedGrid out;
  out.header = read_header(in);
  const auto cols = static_cast<std::size_t>(out.header.p_max - out.header.p_min);
  std::vector<std::vector<double>> columns;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    std::vector<double> col;
    for (const auto& f : text::split(line)) {
      const auto v = text::parse_double(f);
      if (!v) throw Error(ErrorKind::Parse, "grid line " + std::to_string(line_no) + ": '" + f + "'");
      col.push_back(*v);
    }
    if (!columns.empty() && col.size() != columns.front().size()) {
      throw Error(ErrorKind::Parse, "grid line " + std::to_string(line_no) + ": ragged column");
    }
    columns.push_back(std::move(col));
  }
  if (columns.size() != cols) {
    throw Error(ErrorKind::Parse, "grid has " + std::to_string(columns.size()) +
                                      " columns, header implies " + std::to_string(cols));
  }
  out.grid = empty_grid(out.header, columns.front().size());
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < out.grid.rows; ++r) out.grid.at(r, c) = columns[c][r];
  }
  return out;
}

LoadedGrid read_grid_binary(std::istream& in) {
  LoadedGrid out;
  out.header = read_header(in);
  const auto cols = static_cast<std::size_t>(out.header.p_max - out.header.p_min);
  std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() % (sizeof(double) * cols) != 0 || bytes.empty()) {
    throw Error(ErrorKind::Parse, "grid payload size does not match the header's column count");
  }
  const std::size_t rows = bytes.size() / sizeof(double) / cols;
  out.grid = empty_grid(out.header, rows);
  std::size_t k = 0;
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r, ++k) {
      std::memcpy(&out.grid.at(r, c), bytes.data() + k * sizeof(double), sizeof(double));
    }
  }
  return out;
}

}  // namespace oscbp::grid
