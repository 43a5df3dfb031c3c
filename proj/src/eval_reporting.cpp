#include "oscbp/eval_reporting.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include <json.hpp>

#include "oscbp/error.hpp"
#include "oscbp/text.hpp"

namespace oscbp::eval {

ErrorStats error_stats(std::span<const double> errors) {
  const std::size_t n = errors.size();
  if (n < 2) throw Error(ErrorKind::InsufficientData, "error statistics need at least 2 errors");
  const double nd = static_cast<double>(n);
  ErrorStats s;
  for (double e : errors) {
    s.me += e;
    s.mae += std::abs(e);
  }
  s.me /= nd;
  s.mae /= nd;
  double ss = 0.0;
  for (double e : errors) ss += (e - s.me) * (e - s.me);
  s.sde = std::sqrt(ss / (nd - 1.0));
  return s;
}

char to_char(BhsGrade g) { return static_cast<char>('A' + static_cast<int>(g)); }

BhsGrade grade_from_percentages(std::array<double, 3> p) {
  auto meets = [&p](double a, double b, double c) { return p[0] >= a && p[1] >= b && p[2] >= c; };
  if (meets(60, 85, 95)) return BhsGrade::A;
  if (meets(50, 75, 90)) return BhsGrade::B;
  if (meets(40, 65, 85)) return BhsGrade::C;
  return BhsGrade::D;
}

BhsResult bhs_grade(std::span<const double> errors) {
  if (errors.empty()) throw Error(ErrorKind::InsufficientData, "BHS grading needs at least 1 error");
  constexpr std::array<double, 3> limits{5.0, 10.0, 15.0};
  BhsResult r;
  for (std::size_t k = 0; k < 3; ++k) {
    std::size_t hits = 0;
    for (double e : errors) hits += std::abs(e) <= limits[k] ? 1 : 0;
    r.pct_within[k] = 100.0 * static_cast<double>(hits) / static_cast<double>(errors.size());
  }
  r.grade = grade_from_percentages(r.pct_within);
  return r;
}

bool aami_check(double me, double sde) { return std::abs(me) <= 5.0 && sde <= 8.0; }

BlandAltman bland_altman(std::span<const double> est, std::span<const double> ref) {
  if (est.size() != ref.size()) {
    throw Error(ErrorKind::Shape, "Bland-Altman: " + std::to_string(est.size()) +
                                      " estimates vs " + std::to_string(ref.size()) + " references");
  }
  if (est.empty()) throw Error(ErrorKind::InsufficientData, "Bland-Altman needs at least one pair");
  BlandAltman ba;
  const double n = static_cast<double>(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) {
    ba.rows.push_back({(est[i] + ref[i]) / 2.0, est[i] - ref[i]});
    ba.bias += est[i] - ref[i];
  }
  ba.bias /= n;
  if (est.size() > 1) {
    double ss = 0.0;
    for (const auto& r : ba.rows) ss += (r.diff - ba.bias) * (r.diff - ba.bias);
    ba.sd = std::sqrt(ss / (n - 1.0));
  }
  ba.lower = ba.bias - 1.96 * ba.sd;
  ba.upper = ba.bias + 1.96 * ba.sd;
  return ba;
}

std::vector<EvaluationReport> aggregate_runs(std::span<const train::PredictionRow> table,
                                             std::size_t n_runs) {
  if (n_runs == 0) throw Error(ErrorKind::InvalidConfiguration, "n_runs must be positive");
  using Key = std::pair<std::string, std::string>;
  // target -> run -> (subject, record) -> error
  std::map<model::Target, std::map<std::size_t, std::map<Key, double>>> grouped;
  for (const auto& r : table) {
    if (r.run >= n_runs) {
      throw Error(ErrorKind::IncompleteTable, "run " + std::to_string(r.run) + " beyond n_runs");
    }
    auto& cell = grouped[r.target][r.run];
    if (!cell.emplace(Key{r.subject_id, r.record_id}, r.prediction - r.reference).second) {
      throw Error(ErrorKind::IncompleteTable, "duplicate row for record '" + r.record_id + "'");
    }
  }
  if (grouped.empty()) throw Error(ErrorKind::IncompleteTable, "empty prediction table");

  std::vector<EvaluationReport> reports;
  for (const auto& [target, runs] : grouped) {
    if (runs.size() != n_runs) {
      throw Error(ErrorKind::IncompleteTable, model::to_string(target) + ": table covers " +
                                                  std::to_string(runs.size()) + " of " +
                                                  std::to_string(n_runs) + " runs");
    }
    std::set<Key> keys;
    for (const auto& [k, e] : runs.begin()->second) keys.insert(k);

    EvaluationReport rep;
    rep.target = target;
    rep.n = keys.size();
    rep.runs_averaged = n_runs;
    const double nr = static_cast<double>(n_runs);
    for (const auto& [run, errors_by_key] : runs) {
      if (errors_by_key.size() != keys.size() ||
          !std::all_of(errors_by_key.begin(), errors_by_key.end(),
                       [&](const auto& kv) { return keys.contains(kv.first); })) {
        throw Error(ErrorKind::IncompleteTable,
                    "run " + std::to_string(run) + " covers a different record set");
      }
      std::vector<double> errors;
      for (const auto& [k, e] : errors_by_key) errors.push_back(e);
      const auto s = error_stats(errors);
      const auto b = bhs_grade(errors);
      rep.me += s.me / nr;
      rep.mae += s.mae / nr;
      rep.sde += s.sde / nr;
      for (std::size_t k = 0; k < 3; ++k) rep.pct_within[k] += b.pct_within[k] / nr;
    }
    rep.grade = grade_from_percentages(rep.pct_within);
    rep.aami_pass = aami_check(rep.me, rep.sde);
    reports.push_back(rep);
  }
  return reports;
}

std::vector<EvaluationReport> aggregate_runs(std::span<const train::PredictionRow> table) {
  std::size_t runs = 0;
  for (const auto& r : table) runs = std::max(runs, r.run + 1);
  return aggregate_runs(table, runs);
}

void write_reports_json(std::ostream& out, std::span<const EvaluationReport> reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["target"] = model::to_string(r.target);
    j["me"] = r.me;
    j["mae"] = r.mae;
    j["sde"] = r.sde;
    j["pct_within_5"] = r.pct_within[0];
    j["pct_within_10"] = r.pct_within[1];
    j["pct_within_15"] = r.pct_within[2];
    j["bhs_grade"] = std::string(1, to_char(r.grade));
    j["aami_pass"] = r.aami_pass;
    j["n"] = r.n;
    j["runs_averaged"] = r.runs_averaged;
    arr.push_back(std::move(j));
  }
  out << arr.dump(2) << '\n';
}

std::vector<EvaluationReport> read_reports_json(std::istream& in) {
  nlohmann::json arr;
  try {
    in >> arr;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("report json: ") + e.what());
  }
  std::vector<EvaluationReport> out;
  try {
    for (const auto& j : arr) {
      EvaluationReport r;
      r.target = model::parse_target(j.at("target").get<std::string>());
      r.me = j.at("me").get<double>();
      r.mae = j.at("mae").get<double>();
      r.sde = j.at("sde").get<double>();
      r.pct_within = {j.at("pct_within_5").get<double>(), j.at("pct_within_10").get<double>(),
                      j.at("pct_within_15").get<double>()};
      const auto g = j.at("bhs_grade").get<std::string>();
      if (g.size() != 1 || g[0] < 'A' || g[0] > 'D') {
        throw Error(ErrorKind::Parse, "report json: bad bhs_grade '" + g + "'");
      }
      r.grade = static_cast<BhsGrade>(g[0] - 'A');
      r.aami_pass = j.at("aami_pass").get<bool>();
      r.n = j.at("n").get<std::size_t>();
      r.runs_averaged = j.at("runs_averaged").get<std::size_t>();
      out.push_back(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("report json: ") + e.what());
  }
  return out;
}

void write_reports_csv(std::ostream& out, std::span<const EvaluationReport> reports) {
  out << "target,me_mmHg,mae_mmHg,sde_mmHg,pct_within_5,pct_within_10,pct_within_15,bhs_grade,"
         "aami_pass,n,runs_averaged\n";
  for (const auto& r : reports) {
    out << model::to_string(r.target) << ',' << text::format_double(r.me) << ','
        << text::format_double(r.mae) << ',' << text::format_double(r.sde) << ','
        << text::format_double(r.pct_within[0]) << ',' << text::format_double(r.pct_within[1])
        << ',' << text::format_double(r.pct_within[2]) << ',' << to_char(r.grade) << ','
        << (r.aami_pass ? "true" : "false") << ',' << r.n << ',' << r.runs_averaged << '\n';
  }
}

void write_bland_altman_csv(std::ostream& out, const BlandAltman& ba) {
  out << "mean_mmHg,diff_mmHg\n";
  for (const auto& r : ba.rows) {
    out << text::format_double(r.mean) << ',' << text::format_double(r.diff) << '\n';
  }
  out << "# bias," << text::format_double(ba.bias) << '\n';
  out << "# lower_loa," << text::format_double(ba.lower) << '\n';
  out << "# upper_loa," << text::format_double(ba.upper) << '\n';
}

void write_summary(std::ostream& out, std::span<const EvaluationReport> reports) {
  const auto flags = out.flags();
  out << std::fixed << std::setprecision(2);
  for (const auto& r : reports) {
    out << model::to_string(r.target) << " (n=" << r.n << ", runs=" << r.runs_averaged << ")\n"
        << "  ME  " << r.me << " mmHg\n"
        << "  MAE " << r.mae << " mmHg\n"
        << "  SDE " << r.sde << " mmHg\n"
        << "  within 5/10/15 mmHg: " << r.pct_within[0] << "% / " << r.pct_within[1] << "% / "
        << r.pct_within[2] << "%\n"
        << "  BHS grade " << to_char(r.grade) << '\n'
        << "  AAMI (|ME| <= 5, SDE <= 8): " << (r.aami_pass ? "pass" : "fail") << '\n';
  }
  out.flags(flags);
}

}  // namespace oscbp::eval
