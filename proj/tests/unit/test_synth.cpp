#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "oscbp/error.hpp"
#include "oscbp/signal_prep.hpp"
#include "oscbp/synth.hpp"

using namespace oscbp;
using namespace oscbp::synth;

TEST_CASE("generate_record is deterministic") {
  SyntheticCohortConfig c;
  c.noise_sd = 0.1;
  c.artifact_rate = 1.0;
  const auto a = generate_record(c, 123);
  const auto b = generate_record(c, 123);
  const auto d = generate_record(c, 124);
  CHECK(a.record.samples == b.record.samples);
  CHECK(a.truth.beat_times == b.truth.beat_times);
  CHECK(a.truth.sbp == b.truth.sbp);
  CHECK(a.record.samples != d.record.samples);
}

TEST_CASE("noise-free record structure") {
  const SyntheticCohortConfig c;
  const auto g = generate_record(c, 7);
  const auto& t = g.truth;
  CHECK(t.dbp < t.map);
  CHECK(t.map < t.sbp);
  CHECK(t.sbp == g.record.ref_sbp);

  SUBCASE("envelope peaks at MAP and hits the ratios at SBP and DBP") {
    CHECK(t.envelope(t.map) == doctest::Approx(t.envelope.amplitude));
    CHECK(t.envelope(t.map + 0.5) < t.envelope(t.map));
    CHECK(t.envelope(t.map - 0.5) < t.envelope(t.map));
    CHECK(t.envelope(t.sbp) == doctest::Approx(c.sys_ratio * t.envelope.amplitude));
    CHECK(t.envelope(t.dbp) == doctest::Approx(c.dia_ratio * t.envelope.amplitude));
  }
  SUBCASE("slow component decreases") {
    const auto omw = signal::split_components(g.record, 0.3);
    const std::size_t step = 100;  // one second, longer than any beat
    for (std::size_t i = 200; i + step + 200 < omw.slow_component.size(); i += step) {
      REQUIRE(omw.slow_component[i + step] < omw.slow_component[i]);
    }
  }
  SUBCASE("pipeline recovers the beat count and MAP") {
    const auto prep = signal::preprocess(g.record);
    const double beats = static_cast<double>(t.beat_times.size());
    CHECK(std::abs(static_cast<double>(prep.peaks.size()) - beats) <= 1.0);
    const auto maa = maa_oracle(prep.pulses, prep.omw.slow_component);
    CHECK(std::abs(maa.map - t.map) <= 2.0);
    CHECK(std::abs(maa.sbp - t.sbp) <= 4.0);
    CHECK(std::abs(maa.dbp - t.dbp) <= 4.0);
  }
}

TEST_CASE("maa_from_envelope on a triangle") {
  std::vector<double> p, a;
  for (int x = 130; x >= 70; --x) {
    p.push_back(x);
    a.push_back(1.0 - std::abs(x - 100.0) / 40.0);
  }
  const auto r = maa_from_envelope(p, a, 0.5, 0.5);
  CHECK(r.map == 100.0);
  CHECK(r.sbp == doctest::Approx(120.0));
  CHECK(r.dbp == doctest::Approx(80.0));

  const auto one = maa_from_envelope(p, a, 1.0, 1.0);
  CHECK(one.sbp == one.map);
  CHECK(one.dbp == one.map);

  std::vector<double> narrow_p{99, 100, 101}, narrow_a{0.9, 1.0, 0.9};
  try {
    maa_from_envelope(narrow_p, narrow_a, 0.5, 0.5);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RatioNotReached);
  }
}

TEST_CASE("generate_cohort") {
  SyntheticCohortConfig c;
  c.n_subjects = 6;
  c.records_per_subject = 2;
  c.seed = 5;
  const auto cohort = generate_cohort(c);
  CHECK(cohort.records.size() == 12);
  CHECK(cohort.truth.size() == 12);
  std::set<std::string> ids, subjects;
  for (const auto& r : cohort.records) {
    ids.insert(r.record_id);
    subjects.insert(r.subject_id);
    CHECK(r.ref_sbp >= c.sbp_range.lo - c.record_jitter);
    CHECK(r.ref_sbp <= c.sbp_range.hi + c.record_jitter);
    CHECK(r.ref_sbp > r.ref_dbp);
  }
  CHECK(ids.size() == 12);
  CHECK(subjects.size() == 6);

  c.seed = 6;
  const auto other = generate_cohort(c);
  CHECK(other.records[0].ref_sbp != cohort.records[0].ref_sbp);

  std::ostringstream out;
  write_truth_csv(out, cohort);
  const std::string csv = out.str();
  CHECK(csv.rfind("subject_id,record_id,sbp,dbp,map\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
}

TEST_CASE("cohort config validation") {
  SyntheticCohortConfig c;
  c.sbp_range = {150, 100};
  CHECK_THROWS_AS(validate(c), Error);
  c = {};
  c.sampling_rate = 0.0;
  CHECK_THROWS_AS(validate(c), Error);
}

TEST_CASE("amplitude artifacts are flagged as outliers") {
  SyntheticCohortConfig c;
  c.artifact_rate = 1.0;
  c.noise_sd = 0.02;
  std::size_t injected = 0, flagged = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto g = generate_record(c, seed);
    const auto prep = signal::preprocess(g.record);
    const double fs = g.record.sampling_rate;
    for (std::size_t a = 0; a < g.truth.injected_artifact_indices.size(); ++a) {
      if (g.truth.artifact_kinds[a] != ArtifactKind::AmplitudeScaled) continue;
      const double t = g.truth.beat_times[g.truth.injected_artifact_indices[a]];
      ++injected;
      for (const auto& p : prep.pulses) {
        if (std::abs(static_cast<double>(p.peak_index) / fs - t) < 0.15 && p.is_outlier) {
          ++flagged;
          break;
        }
      }
    }
  }
  REQUIRE(injected >= 30);
  CHECK(static_cast<double>(flagged) >= 0.95 * static_cast<double>(injected));
}
