#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "cvdsched/io.hpp"
#include "support.hpp"

using namespace cvdsched;

namespace {

void check_same_record(const LongitudinalRecord& a, const LongitudinalRecord& b) {
  CHECK(a.person_id == b.person_id);
  CHECK(a.practice_id == b.practice_id);
  CHECK(a.sex == b.sex);
  CHECK(a.entry_age == b.entry_age);
  CHECK(a.exit_age == b.exit_age);
  CHECK(a.event_age == b.event_age);
  CHECK(a.death_age == b.death_age);
  CHECK(a.statin_start_age == b.statin_start_age);
  CHECK(a.bpm_start_age == b.bpm_start_age);
  CHECK(a.fixed.diabetes == b.fixed.diabetes);
  CHECK(a.fixed.renal_disease == b.fixed.renal_disease);
  CHECK(a.fixed.atrial_fibrillation == b.fixed.atrial_fibrillation);
  CHECK(a.fixed.townsend == b.fixed.townsend);
  REQUIRE(a.measurements.size() == b.measurements.size());
  for (std::size_t j = 0; j < a.measurements.size(); ++j) {
    const auto& x = a.measurements[j];
    const auto& y = b.measurements[j];
    CHECK(x.age == y.age);
    CHECK(x.factor == y.factor);
    CHECK(x.value == y.value);
    CHECK(x.bpm == y.bpm);
    CHECK(x.statin == y.statin);
  }
}

}  // namespace

TEST_CASE("format_double round-trips exactly") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> norm(0.0, 1e3);
  for (int i = 0; i < 10000; ++i) {
    const double v = norm(rng) * std::pow(10.0, (i % 21) - 10);
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
  CHECK(std::isinf(parse_double(format_double(std::numeric_limits<double>::infinity()))));
  CHECK_THROWS_AS(parse_double("abc"), DataError);
  CHECK_THROWS_AS(parse_double("1.5x"), DataError);
}

TEST_CASE("cohort CSV round trip") {
  SimConfig cfg = testing::small_config(300, 6);
  cfg.statin_threshold = 1.0;
  cfg.bpm_threshold = 1.0;
  cfg.death_rate = 0.01;
  cfg.prevalence.atrial_fibrillation = 0.1;
  cfg.prevalence.renal_disease = 0.1;
  const Cohort cohort = simulate_cohort(cfg);
  testing::TempDir dir("io_cohort");
  write_cohort(cohort, dir.path());
  const Cohort back = read_cohort(dir.path());
  REQUIRE(back.size() == cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) check_same_record(cohort[i], back[i]);

  // Writing what was read gives the same bytes.
  testing::TempDir again("io_cohort2");
  write_cohort(back, again.path());
  CHECK(testing::slurp(dir.path() / kPersonsFile) == testing::slurp(again.path() / kPersonsFile));
  CHECK(testing::slurp(dir.path() / kMeasurementsFile) == testing::slurp(again.path() / kMeasurementsFile));
}

TEST_CASE("malformed cohort files are data errors") {
  testing::TempDir dir("io_bad");
  const Cohort one = simulate_cohort(testing::small_config(3, 2));
  write_cohort(one, dir.path());
  {
    std::ofstream out(dir.path() / kMeasurementsFile, std::ios::app);
    out << "999,40,sbp,0.1,0,0\n";
  }
  CHECK_THROWS_AS(read_cohort(dir.path()), DataError);
  std::filesystem::remove(dir.path() / kMeasurementsFile);
  CHECK_THROWS_AS(read_cohort(dir.path()), DataError);
}

TEST_CASE("simulation config JSON round trip") {
  SimConfig cfg = testing::small_config(1234, 99);
  cfg.statin_threshold = 1.25;
  cfg.statin_start_rate = 0.01;
  json j = cfg;
  const SimConfig back = j.get<SimConfig>();
  CHECK(json(back) == j);
  CHECK(back.n_persons == 1234);
  CHECK(back.statin_threshold == 1.25);
  CHECK_FALSE(back.bpm_threshold);
  CHECK(back.baseline_hazard.rates == cfg.baseline_hazard.rates);
}

TEST_CASE("Cox fit JSON keeps infinite standard errors") {
  CoxFit f = testing::step_fit(50, 55, {51, 52.5}, {0.01, 0.03}, Eigen::Vector2d(0.3, 0.0), Eigen::Vector2d(1, 2));
  f.se << 0.1, std::numeric_limits<double>::infinity();
  f.held_at_zero = {"x1"};
  f.n_events = 12;
  const json j = f;
  const CoxFit back = j.get<CoxFit>();
  CHECK(back.names == f.names);
  CHECK(back.beta == f.beta);
  CHECK(back.se[0] == 0.1);
  CHECK(std::isinf(back.se[1]));
  CHECK(back.knot_time == f.knot_time);
  CHECK(back.knot_cumhaz == f.knot_cumhaz);
  CHECK(back.covariate_means == f.covariate_means);
  CHECK(back.origin == 50);
  CHECK(back.horizon == 55);
  CHECK(back.n_events == 12);
  CHECK(back.held_at_zero == f.held_at_zero);
}

TEST_CASE("LMEM fit JSON round trip") {
  std::mt19937_64 rng(3);
  const LmemFit fit = testing::random_lmem_fit(rng, 45.0);
  const LmemFit back = json(fit).get<LmemFit>();
  CHECK(back.age_center == 45.0);
  CHECK(back.beta == fit.beta);
  CHECK(back.sigma == fit.sigma);
  CHECK(back.sigma_e == fit.sigma_e);
  CHECK(back.converged == fit.converged);
}

TEST_CASE("landmark bundle round trip preserves predictions") {
  SimConfig cfg = testing::small_config(1500, 12);
  cfg.entry_age_min = 40;
  cfg.entry_age_max = 55;
  const Cohort cohort = simulate_cohort(cfg);
  const LandmarkModels m = fit_landmark_models(view_of(cohort), LandmarkAge{55}, LandmarkOptions{});
  testing::TempDir dir("io_bundle");
  write_landmark_bundle(m, dir.path());
  const LandmarkModels back = read_landmark_bundle(dir.path());
  CHECK(back.la == 55);
  CHECK(back.policy.names() == m.policy.names());
  CHECK(back.cox_10y.beta == m.cox_10y.beta);
  for (std::size_t k = 0; k < m.cox_5y.size(); ++k) {
    REQUIRE(back.cox_5y[k].has_value() == m.cox_5y[k].has_value());
    if (m.cox_5y[k]) CHECK(back.cox_5y[k]->knot_cumhaz == m.cox_5y[k]->knot_cumhaz);
  }
  const CohortView lc = build_landmark_cohort(view_of(cohort), 55.0);
  for (std::size_t i = 0; i < std::min<std::size_t>(lc.size(), 50); ++i) {
    const RiskProfile a = risk_profile(m, *lc[i], LandmarkAge{55});
    const RiskProfile b = risk_profile(back, *lc[i], LandmarkAge{55});
    for (std::size_t k = 0; k < a.risks.size(); ++k) CHECK(a.risks[k] == b.risks[k]);
  }
}

TEST_CASE("net benefit parameters JSON") {
  NbParams p;
  p.lambda = 30000;
  p.c_s = 4.3;
  const NbParams back = json(p).get<NbParams>();
  CHECK(back.lambda == 30000);
  CHECK(back.c_s == 4.3);
  CHECK(back.u_s == p.u_s);
  CHECK(back.theta == p.theta);
}

TEST_CASE("CSV reader checks widths and columns") {
  testing::TempDir dir("io_csv");
  {
    CsvWriter w(dir.path() / "a.csv", {"x", "y"});
    w << 1.5 << "b";
    w.end_row();
  }
  const CsvTable t = read_csv(dir.path() / "a.csv");
  CHECK(t.header == std::vector<std::string>{"x", "y"});
  CHECK(t.rows.at(0).at(t.column("y")) == "b");
  CHECK_THROWS_AS(t.column("z"), DataError);
  {
    std::ofstream out(dir.path() / "a.csv", std::ios::app);
    out << "1,2,3\n";
  }
  CHECK_THROWS_AS(read_csv(dir.path() / "a.csv"), DataError);
  CHECK_THROWS_AS(read_json(dir.path() / "missing.json"), DataError);
}
