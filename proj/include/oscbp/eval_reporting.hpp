#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "oscbp/bp_model.hpp"
#include "oscbp/trainer.hpp"

namespace oscbp::eval {

struct ErrorStats {
  double me = 0.0;
  double mae = 0.0;
  double sde = 0.0;  // sample standard deviation (n - 1)
};

/// errors are estimate - reference. Needs n >= 2.
ErrorStats error_stats(std::span<const double> errors);

enum class BhsGrade { A, B, C, D };
char to_char(BhsGrade g);

struct BhsResult {
  std::array<double, 3> pct_within{};  // within 5, 10, 15 mmHg (inclusive)
  BhsGrade grade = BhsGrade::D;
};

/// Grade from cumulative percentages; thresholds are inclusive.
BhsGrade grade_from_percentages(std::array<double, 3> pct);
BhsResult bhs_grade(std::span<const double> errors);

/// |me| <= 5 and sde <= 8, inclusive.
bool aami_check(double me, double sde);

struct BlandAltmanRow {
  double mean = 0.0;  // (estimate + reference) / 2
  double diff = 0.0;  // estimate - reference
};

struct BlandAltman {
  std::vector<BlandAltmanRow> rows;
  double bias = 0.0;
  double sd = 0.0;
  double lower = 0.0;  // bias - 1.96 sd
  double upper = 0.0;  // bias + 1.96 sd
};

BlandAltman bland_altman(std::span<const double> estimates, std::span<const double> references);

struct EvaluationReport {
  model::Target target = model::Target::SBP;
  double me = 0.0;
  double mae = 0.0;
  double sde = 0.0;
  std::array<double, 3> pct_within{};
  BhsGrade grade = BhsGrade::D;
  bool aami_pass = false;
  std::size_t n = 0;
  std::size_t runs_averaged = 0;
};

/// Per-run statistics averaged over runs 0..n_runs-1, one report per target present.
/// Every run must cover the same (subject, record) set.
std::vector<EvaluationReport> aggregate_runs(std::span<const train::PredictionRow> table,
                                             std::size_t n_runs);

/// Infers the run count as max(run) + 1.
std::vector<EvaluationReport> aggregate_runs(std::span<const train::PredictionRow> table);

void write_reports_json(std::ostream& out, std::span<const EvaluationReport> reports);
std::vector<EvaluationReport> read_reports_json(std::istream& in);
void write_reports_csv(std::ostream& out, std::span<const EvaluationReport> reports);
/// Columns mean_mmHg,diff_mmHg, then footer lines "# bias,..", "# lower_loa,..", "# upper_loa,..".
void write_bland_altman_csv(std::ostream& out, const BlandAltman& ba);
/// Human-readable summary.
void write_summary(std::ostream& out, std::span<const EvaluationReport> reports);

}  // namespace oscbp::eval
