#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "oscbp/signal_prep.hpp"

namespace oscbp::grid {

enum class ColumnSource : std::uint8_t { Original, Interpolated, Extrapolated };

/// Pressure range and morphology length of the representation.
/// Columns sit at integer pressures p_min + 1 .. p_max, so the default
/// 20..235 mmHg range yields 215 columns.
struct GridConfig {
  int p_min = 20;
  int p_max = 235;
  std::size_t rows = 215;
  bool clamp_extrapolation = false;

  std::size_t columns() const { return static_cast<std::size_t>(p_max - p_min); }
};

void validate(const GridConfig& config);

/// Rows are morphology samples, columns are cuff pressures (ascending).
/// Storage is row-major: value(r, c) = values[r * cols + c].
struct MorphoTemporalGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<double> column_pressure;
  std::vector<ColumnSource> provenance;

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::vector<double> column(std::size_t c) const;
};

/// Slow-component (cuff) pressure at the pulse peak.
double pulse_pressure(const signal::PulseSegment& pulse, std::span<const double> slow);

/// Linear resampling onto n equally spaced points spanning the pulse, endpoints kept.
std::vector<double> resample_pulse(std::span<const double> pulse, std::size_t n = 215);

/// Column index nearest to a pressure (ties go to the lower pressure), clamped to the grid.
std::size_t column_for_pressure(double pressure, const GridConfig& config);

/// Pulses are taken trough to trough (inclusive) from omw; outliers are skipped.
MorphoTemporalGrid build_grid(std::span<const signal::PulseSegment> pulses,
                              std::span<const double> omw, std::span<const double> slow,
                              const GridConfig& config = {});

struct GridHeader {
  std::string subject_id;
  std::string record_id;
  int p_min = 20;
  int p_max = 235;
};

/// Header line "subject_id,record_id,p_min,p_max", then one column per line (column-major CSV).
void write_grid_csv(std::ostream& out, const GridHeader& header, const MorphoTemporalGrid& grid);
/// Same header line, then rows*cols little-endian float64 values in column-major order.
void write_grid_binary(std::ostream& out, const GridHeader& header,
                       const MorphoTemporalGrid& grid);

struct LoadedGrid {
  GridHeader header;
  MorphoTemporalGrid grid;  // provenance is not serialized and comes back empty
};

/// Row count is inferred from the data; column pressures come from the header.
LoadedGrid read_grid_csv(std::istream& in);
LoadedGrid read_grid_binary(std::istream& in);

}  // namespace oscbp::grid
