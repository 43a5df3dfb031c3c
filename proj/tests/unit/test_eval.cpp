#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "oscbp/error.hpp"
#include "oscbp/eval_reporting.hpp"

using namespace oscbp;
using namespace oscbp::eval;
using model::Target;
using train::PredictionRow;

namespace {

std::vector<PredictionRow> table(std::size_t run, Target t, const std::vector<double>& errors) {
  std::vector<PredictionRow> rows;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    PredictionRow r;
    r.run = run;
    r.subject_id = "S" + std::to_string(i / 2);
    r.record_id = "R" + std::to_string(i);
    r.target = t;
    r.reference = 120.0;
    r.prediction = 120.0 + errors[i];
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

TEST_CASE("error_stats examples") {
  const auto z = error_stats(std::vector<double>{0, 0});
  CHECK(z.me == 0.0);
  CHECK(z.mae == 0.0);
  CHECK(z.sde == 0.0);

  const std::vector<double> e{1, -1, 2, -2};
  const auto s = error_stats(e);
  CHECK(s.me == 0.0);
  CHECK(s.mae == 1.5);
  CHECK(s.sde == doctest::Approx(std::sqrt(10.0 / 3.0)));

  std::vector<double> shifted = e;
  for (double& v : shifted) v += 4.0;
  const auto t = error_stats(shifted);
  CHECK(t.me == doctest::Approx(4.0));
  CHECK(t.sde == doctest::Approx(s.sde));

  CHECK_THROWS_AS(error_stats(std::vector<double>{1.0}), Error);
}

TEST_CASE("error_stats properties") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(1.0, 6.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> e(25);
    for (double& v : e) v = n(rng);
    const auto s = error_stats(e);
    CHECK(s.mae >= std::abs(s.me));
    std::shuffle(e.begin(), e.end(), rng);
    const auto p = error_stats(e);
    CHECK(p.me == doctest::Approx(s.me).epsilon(1e-12));
    CHECK(p.mae == doctest::Approx(s.mae).epsilon(1e-12));
    CHECK(p.sde == doctest::Approx(s.sde).epsilon(1e-12));
    const auto b = bhs_grade(e);
    CHECK(b.pct_within[0] <= b.pct_within[1]);
    CHECK(b.pct_within[1] <= b.pct_within[2]);
  }
}

TEST_CASE("BHS grading") {
  CHECK(grade_from_percentages({89.62, 99.13, 99.71}) == BhsGrade::A);
  CHECK(grade_from_percentages({60, 85, 95}) == BhsGrade::A);
  CHECK(grade_from_percentages({59.99, 85, 95}) == BhsGrade::B);
  CHECK(grade_from_percentages({50, 75, 90}) == BhsGrade::B);
  CHECK(grade_from_percentages({40, 65, 85}) == BhsGrade::C);
  CHECK(grade_from_percentages({39, 65, 85}) == BhsGrade::D);
  const auto far = bhs_grade(std::vector<double>{16, -20, 30});
  CHECK(far.pct_within == std::array<double, 3>{0, 0, 0});
  CHECK(far.grade == BhsGrade::D);
  const auto edges = bhs_grade(std::vector<double>{5, -10, 15, 0});
  CHECK(edges.pct_within == std::array<double, 3>{50, 75, 100});
  CHECK(to_char(BhsGrade::C) == 'C');
}

TEST_CASE("AAMI check") {
  CHECK(aami_check(0.08, 2.48));
  CHECK(aami_check(5.0, 8.0));
  CHECK(aami_check(-5.0, 8.0));
  CHECK_FALSE(aami_check(6.0, 2.0));
  CHECK_FALSE(aami_check(0.0, 8.01));
}

TEST_CASE("Bland-Altman") {
  const std::vector<double> same{110, 120, 130};
  const auto z = bland_altman(same, same);
  for (const auto& r : z.rows) CHECK(r.diff == 0.0);
  CHECK(z.bias == 0.0);
  CHECK(z.lower == 0.0);
  CHECK(z.upper == 0.0);

  const auto one = bland_altman(std::vector<double>{120}, std::vector<double>{110});
  REQUIRE(one.rows.size() == 1);
  CHECK(one.rows[0].mean == 115.0);
  CHECK(one.rows[0].diff == 10.0);

  const std::vector<double> est{118, 125, 131, 102}, ref{120, 121, 128, 105};
  const auto ba = bland_altman(est, ref);
  std::vector<double> err;
  for (std::size_t i = 0; i < est.size(); ++i) err.push_back(est[i] - ref[i]);
  CHECK(ba.bias == doctest::Approx(error_stats(err).me));
  CHECK(ba.upper - ba.bias == doctest::Approx(1.96 * ba.sd));
  CHECK_THROWS_AS(bland_altman(est, std::vector<double>{1, 2}), Error);

  std::ostringstream out;
  write_bland_altman_csv(out, ba);
  CHECK(out.str().rfind("mean_mmHg,diff_mmHg\n", 0) == 0);
  CHECK(out.str().find("# bias,") != std::string::npos);
}

TEST_CASE("aggregate_runs") {
  SUBCASE("identical runs equal a single run") {
    const std::vector<double> e{1, -3, 2, 0.5, -1, 4};
    auto rows = table(0, Target::SBP, e);
    const auto single = aggregate_runs(rows);
    auto r1 = table(1, Target::SBP, e);
    rows.insert(rows.end(), r1.begin(), r1.end());
    const auto both = aggregate_runs(rows);
    REQUIRE(both.size() == 1);
    CHECK(both[0].me == doctest::Approx(single[0].me));
    CHECK(both[0].sde == doctest::Approx(single[0].sde));
    CHECK(both[0].pct_within == single[0].pct_within);
    CHECK(both[0].n == 6);
    CHECK(both[0].runs_averaged == 2);
  }
  SUBCASE("means of per-run statistics") {
    auto rows = table(0, Target::DBP, {1, 1, 1, 1});
    auto r1 = table(1, Target::DBP, {3, 3, 3, 3});
    rows.insert(rows.end(), r1.begin(), r1.end());
    const auto rep = aggregate_runs(rows);
    REQUIRE(rep.size() == 1);
    CHECK(rep[0].target == Target::DBP);
    CHECK(rep[0].me == 2.0);
  }
  SUBCASE("perfect predictions") {
    auto rows = table(0, Target::SBP, {0, 0, 0});
    auto d = table(0, Target::DBP, {0, 0, 0});
    rows.insert(rows.end(), d.begin(), d.end());
    for (const auto& r : aggregate_runs(rows)) {
      CHECK(r.grade == BhsGrade::A);
      CHECK(r.aami_pass);
    }
  }
  SUBCASE("incomplete tables are rejected") {
    auto rows = table(0, Target::SBP, {1, 2, 3});
    auto r1 = table(1, Target::SBP, {1, 2});
    rows.insert(rows.end(), r1.begin(), r1.end());
    try {
      aggregate_runs(rows);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::IncompleteTable);
    }
    CHECK_THROWS_AS(aggregate_runs(table(0, Target::SBP, {1, 2}), 2), Error);
  }
}

TEST_CASE("report JSON round-trips") {
  auto rows = table(0, Target::SBP, {1.25, -2, 7, 0.5});
  const auto reps = aggregate_runs(rows);
  std::stringstream ss;
  write_reports_json(ss, reps);
  const auto back = read_reports_json(ss);
  REQUIRE(back.size() == reps.size());
  CHECK(back[0].me == reps[0].me);
  CHECK(back[0].sde == reps[0].sde);
  CHECK(back[0].grade == reps[0].grade);
  CHECK(back[0].aami_pass == reps[0].aami_pass);
  CHECK(back[0].n == reps[0].n);

  std::ostringstream summary;
  write_summary(summary, reps);
  CHECK(summary.str().find("SBP") != std::string::npos);
}
