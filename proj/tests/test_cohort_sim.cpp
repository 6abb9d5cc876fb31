#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "cvdsched/cohort_sim.hpp"
#include "cvdsched/io.hpp"
#include "support.hpp"

using namespace cvdsched;
using testing::small_config;

namespace {

bool same_record(const LongitudinalRecord& a, const LongitudinalRecord& b) {
  if (a.person_id != b.person_id || a.practice_id != b.practice_id || a.sex != b.sex ||
      a.entry_age != b.entry_age || a.exit_age != b.exit_age || a.event_age != b.event_age ||
      a.death_age != b.death_age || a.statin_start_age != b.statin_start_age ||
      a.bpm_start_age != b.bpm_start_age || a.fixed.townsend != b.fixed.townsend ||
      a.fixed.diabetes != b.fixed.diabetes || a.measurements.size() != b.measurements.size())
    return false;
  for (std::size_t j = 0; j < a.measurements.size(); ++j) {
    const auto &x = a.measurements[j], &y = b.measurements[j];
    if (x.age != y.age || x.factor != y.factor || x.value != y.value || x.bpm != y.bpm || x.statin != y.statin)
      return false;
  }
  return true;
}

Cohort practices_only(int n_practices, int per_practice) {
  Cohort c;
  std::int64_t id = 0;
  for (int p = 0; p < n_practices; ++p)
    for (int k = 0; k < per_practice; ++k) {
      LongitudinalRecord r;
      r.person_id = id++;
      r.practice_id = p;
      r.entry_age = 40;
      r.exit_age = 50;
      c.push_back(r);
    }
  return c;
}

}  // namespace

TEST_CASE("same seed gives a byte-identical cohort") {
  const SimConfig cfg = small_config(400, 7);
  const Cohort a = simulate_cohort(cfg);
  const Cohort b = simulate_cohort(cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(same_record(a[i], b[i]));

  testing::TempDir d1("sim_a"), d2("sim_b");
  write_cohort(a, d1.path());
  write_cohort(b, d2.path());
  CHECK(testing::slurp(d1.path() / kPersonsFile) == testing::slurp(d2.path() / kPersonsFile));
  CHECK(testing::slurp(d1.path() / kMeasurementsFile) == testing::slurp(d2.path() / kMeasurementsFile));

  SimConfig other = cfg;
  other.seed = 8;
  const Cohort c = simulate_cohort(other);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < a.size(); ++i) differing += !same_record(a[i], c[i]);
  CHECK(differing > a.size() / 2);
}

TEST_CASE("a person's draws do not depend on the cohort size") {
  const Cohort small = simulate_cohort(small_config(50, 3));
  const Cohort large = simulate_cohort(small_config(500, 3));
  for (std::size_t i = 0; i < small.size(); ++i) CHECK(same_record(small[i], large[i]));
}

TEST_CASE("zero baseline hazard produces no events") {
  SimConfig cfg = small_config(2000, 11);
  cfg.baseline_hazard = PiecewiseHazard::constant(0.0);
  for (const auto& r : simulate_cohort(cfg)) CHECK_FALSE(r.event_age.has_value());
}

TEST_CASE("constant hazard reproduces the exponential ten-year event fraction") {
  SimConfig cfg = small_config(50000, 2024);
  cfg.cox = CoxTruth{};
  cfg.baseline_hazard = PiecewiseHazard::constant(0.02);
  cfg.censor_rate = 0.0;
  cfg.death_rate = 0.0;
  cfg.admin_years = 10.0;
  cfg.entry_age_min = 30.0;
  cfg.entry_age_max = 70.0;
  cfg.visit_rate = 0.0;
  const Cohort cohort = simulate_cohort(cfg);
  std::size_t events = 0;
  for (const auto& r : cohort) {
    CHECK(r.exit_age == doctest::Approx(r.event_age ? *r.event_age : r.entry_age + 10.0));
    events += r.event_age.has_value();
  }
  const double fraction = static_cast<double>(events) / static_cast<double>(cohort.size());
  CHECK(std::abs(fraction - (1.0 - std::exp(-0.2))) < 0.005);
}

TEST_CASE("records satisfy their ordering invariants over random configs") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 8; ++rep) {
    SimConfig cfg = small_config(300, 100 + rep);
    cfg.visit_rate = 0.1 + 2.0 * u(rng);
    cfg.censor_rate = 0.1 * u(rng);
    cfg.death_rate = 0.05 * u(rng);
    cfg.missing_prob.setConstant(u(rng));
    cfg.admin_years = 1.0 + 20.0 * u(rng);
    cfg.bpm_threshold = u(rng) < 0.5 ? std::optional<double>(1.0) : std::nullopt;
    cfg.statin_start_rate = 0.1 * u(rng);
    const Cohort cohort = simulate_cohort(cfg);
    for (const auto& r : cohort) {
      CHECK_NOTHROW(check_record(r));
      CHECK(r.exit_age <= cfg.max_age + 1e-12);
      CHECK(r.exit_age <= r.entry_age + cfg.admin_years + 1e-9);
      CHECK(r.entry_age >= cfg.entry_age_min);
      CHECK(r.entry_age <= cfg.entry_age_max);
      CHECK(!(r.event_age && r.death_age));
      for (const auto& m : r.measurements) {
        CHECK(m.bpm == r.on_bpm_at(m.age));
        CHECK(m.statin == (r.statin_start_age && *r.statin_start_age <= m.age));
      }
    }
  }
}

TEST_CASE("empty cohort and configuration errors") {
  SimConfig cfg = small_config(0, 1);
  CHECK(simulate_cohort(cfg).empty());

  cfg = small_config(10, 1);
  cfg.trajectory.sigma(0, 0) = -0.5;
  CHECK_THROWS_AS(simulate_cohort(cfg), ConfigError);

  cfg = small_config(10, 1);
  cfg.trajectory.sigma(0, 1) = 0.3;  // asymmetric
  CHECK_THROWS_AS(simulate_cohort(cfg), ConfigError);

  cfg = small_config(10, 1);
  cfg.missing_prob[2] = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = small_config(10, 1);
  cfg.censor_rate = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = small_config(10, 1);
  cfg.baseline_hazard = PiecewiseHazard{{0.0, 50.0}, {0.01}};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("piecewise hazard cumulative and inverse agree") {
  const PiecewiseHazard h{{0.0, 40.0, 60.0}, {0.01, 0.02, 0.05}};
  CHECK(h.rate_at(39.9) == 0.01);
  CHECK(h.rate_at(40.0) == 0.02);
  CHECK(h.cumulative(30.0, 70.0) == doctest::Approx(0.1 + 0.4 + 0.5));
  for (double target : {0.05, 0.3, 0.9, 2.0}) {
    auto t = h.inverse(30.0, target, 1.3);
    REQUIRE(t);
    CHECK(1.3 * h.cumulative(30.0, *t) == doctest::Approx(target));
  }
  CHECK_FALSE(PiecewiseHazard::constant(0.0).inverse(0.0, 0.1, 1.0));
}

TEST_CASE("empirical mean trajectory follows the fixed-effect line") {
  SimConfig cfg = small_config(6000, 5);
  cfg.bpm_threshold.reset();
  cfg.statin_threshold.reset();
  cfg.missing_prob.setZero();
  cfg.visit_rate = 1.0;
  cfg.baseline_hazard = PiecewiseHazard::constant(0.0);
  const Cohort cohort = simulate_cohort(cfg);
  const auto& tr = cfg.trajectory;
  for (Factor f : kAllFactors) {
    const int k = static_cast<int>(f);
    // Pooled least squares of value on centered age.
    double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& r : cohort)
      for (const auto& m : r.measurements)
        if (m.factor == f) {
          const double x = m.age - tr.age_center;
          n += 1;
          sx += x;
          sy += m.value;
          sxx += x * x;
          sxy += x * m.value;
        }
    const double slope = (sxy - sx * sy / n) / (sxx - sx * sx / n);
    const double intercept = (sy - slope * sx) / n;
    CAPTURE(k);
    // Between-person spread dominates the Monte Carlo error: sd(u0)/sqrt(6000) ~ 0.01.
    CHECK(std::abs(intercept - tr.intercept[k]) < 0.05);
    CHECK(std::abs(slope - tr.slope[k]) < 0.004);
  }
}

TEST_CASE("per-person random effects have the generating covariance") {
  SimConfig cfg = small_config(20000, 12);
  const auto truth = simulate_cohort_with_truth(cfg).truth;
  Eigen::MatrixXd u(static_cast<Eigen::Index>(truth.size()), 2 * kNumFactors);
  for (std::size_t i = 0; i < truth.size(); ++i) u.row(static_cast<Eigen::Index>(i)) = truth[i].random_effects;
  const Eigen::MatrixXd cov = (u.transpose() * u) / static_cast<double>(truth.size());
  for (int k = 0; k < 2 * kNumFactors; ++k) {
    const double expected = cfg.trajectory.sigma(k, k);
    CHECK(std::abs(cov(k, k) - expected) < 0.05 * expected);
  }
  CHECK(cov(2, 3) == doctest::Approx(0.15).epsilon(0.1));
}

TEST_CASE("threshold treatment rules start at the latent crossing") {
  SimConfig cfg = small_config(3000, 21);
  cfg.statin_threshold = 0.8;
  const auto sim = simulate_cohort_with_truth(cfg);
  int started = 0;
  for (std::size_t i = 0; i < sim.records.size(); ++i) {
    const auto& r = sim.records[i];
    if (!r.statin_start_age) continue;
    ++started;
    const double latent =
        latent_factor(cfg.trajectory, sim.truth[i].random_effects, Factor::tchol, *r.statin_start_age, false, false);
    if (*r.statin_start_age > r.entry_age) CHECK(latent == doctest::Approx(0.8).epsilon(1e-9));
    else CHECK(latent >= 0.8 - 1e-9);
  }
  CHECK(started > 0);
}

TEST_CASE("exogenous treatment start rate") {
  SimConfig cfg = small_config(20000, 4);
  cfg.bpm_threshold.reset();
  cfg.statin_threshold.reset();
  cfg.statin_start_rate = 0.05;
  cfg.baseline_hazard = PiecewiseHazard::constant(0.0);
  cfg.censor_rate = 0.0;
  cfg.admin_years = 10.0;
  cfg.visit_rate = 0.0;
  std::size_t started = 0, n = 0;
  for (const auto& r : simulate_cohort(cfg)) {
    if (r.exit_age < r.entry_age + 10.0 - 1e-9) continue;
    ++n;
    started += r.statin_start_age.has_value();
  }
  CHECK(static_cast<double>(started) / static_cast<double>(n) ==
        doctest::Approx(1.0 - std::exp(-0.5)).epsilon(0.03));
}

TEST_CASE("practice split sizes") {
  auto three = split_practices(practices_only(3, 5), 2.0 / 3.0, 1);
  CHECK(three.derivation_practices.size() == 2);
  CHECK(three.validation_practices.size() == 1);
  CHECK(three.derivation.size() == 10);
  CHECK(three.validation.size() == 5);

  auto many = split_practices(practices_only(406, 1), 2.0 / 3.0, 9);
  CHECK(many.derivation_practices.size() == 270);
  CHECK(many.validation_practices.size() == 136);
}

TEST_CASE("practice split keeps practices whole and is deterministic") {
  const Cohort cohort = simulate_cohort(small_config(3000, 31));
  const auto a = split_practices(cohort, 2.0 / 3.0, 17);
  const auto b = split_practices(cohort, 2.0 / 3.0, 17);
  CHECK(a.derivation_practices == b.derivation_practices);
  CHECK(a.derivation.size() + a.validation.size() == cohort.size());

  std::set<int> dp(a.derivation_practices.begin(), a.derivation_practices.end());
  std::set<std::int64_t> ids;
  for (const auto& r : a.derivation) {
    CHECK(dp.count(r.practice_id) == 1);
    ids.insert(r.person_id);
  }
  for (const auto& r : a.validation) {
    CHECK(dp.count(r.practice_id) == 0);
    ids.insert(r.person_id);
  }
  CHECK(ids.size() == cohort.size());

  const auto c = split_practices(cohort, 2.0 / 3.0, 18);
  CHECK(c.derivation_practices != a.derivation_practices);
}

TEST_CASE("practice split errors") {
  CHECK_THROWS_AS(split_practices(practices_only(1, 10), 0.5, 1), DataError);
  CHECK_THROWS_AS(split_practices(practices_only(4, 10), 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split_practices(practices_only(4, 10), 1.0, 1), ConfigError);
}
