#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cvdsched/types.hpp"

namespace cvdsched {

/// Piecewise-constant hazard over age. `rates[j]` applies on
/// [knots[j], knots[j+1]); the last piece extends to infinity.
struct PiecewiseHazard {
  std::vector<double> knots{0.0};
  std::vector<double> rates{0.0};

  static PiecewiseHazard constant(double rate) { return {{0.0}, {rate}}; }

  void validate() const;
  double rate_at(double age) const;
  double cumulative(double from, double to) const;
  /// Smallest age t >= from with cumulative(from, t) * multiplier >= target,
  /// or nullopt when the hazard never accumulates that much.
  std::optional<double> inverse(double from, double target, double multiplier) const;
};

/// Generating parameters of the five-factor trajectory model. Age enters as
/// (age - age_center).
struct TrajectoryTruth {
  Eigen::Matrix<double, kNumFactors, 1> intercept = Eigen::Matrix<double, kNumFactors, 1>::Zero();
  Eigen::Matrix<double, kNumFactors, 1> slope = Eigen::Matrix<double, kNumFactors, 1>::Zero();
  double bpm_effect = 0.0;     // shift in SBP while on BP medication
  double statin_effect = 0.0;  // shift in TCHOL while on statins
  double age_center = 60.0;
  // Random-effect covariance ordered (5 intercepts, 5 slopes).
  Eigen::Matrix<double, 2 * kNumFactors, 2 * kNumFactors> sigma =
      Eigen::Matrix<double, 2 * kNumFactors, 2 * kNumFactors>::Zero();
  Eigen::Matrix<double, kNumFactors, 1> sigma_e = Eigen::Matrix<double, kNumFactors, 1>::Ones();
};

/// Log-hazard coefficients of the event-generating proportional hazards model.
struct CoxTruth {
  Eigen::Matrix<double, kNumFactors, 1> factors = Eigen::Matrix<double, kNumFactors, 1>::Zero();
  double bpm = 0.0;
  double diabetes = 0.0;
  double renal_disease = 0.0;
  double depression = 0.0;
  double migraine = 0.0;
  double severe_mental_illness = 0.0;
  double rheumatoid_arthritis = 0.0;
  double atrial_fibrillation = 0.0;
  double townsend = 0.0;  // per deprivation category above 1
  double male = 0.0;
};

struct Prevalences {
  double diabetes = 0.0;
  double renal_disease = 0.0;
  double depression = 0.0;
  double migraine = 0.0;
  double severe_mental_illness = 0.0;
  double rheumatoid_arthritis = 0.0;
  double atrial_fibrillation = 0.0;
};

struct SimConfig {
  std::int64_t n_persons = 1000;
  int n_practices = 20;
  double entry_age_min = 30.0;
  double entry_age_max = 70.0;
  double max_age = 95.0;
  double admin_years = 13.0;  // administrative end of follow-up after entry
  double male_fraction = 0.5;

  TrajectoryTruth trajectory;
  CoxTruth cox;
  PiecewiseHazard baseline_hazard = PiecewiseHazard::constant(0.0);

  double visit_rate = 0.5;  // Poisson visits per year
  Eigen::Matrix<double, kNumFactors, 1> missing_prob = Eigen::Matrix<double, kNumFactors, 1>::Zero();
  double censor_rate = 0.0;  // dropout per year
  double death_rate = 0.0;   // non-CVD death per year
  Prevalences prevalence;

  // Treatment starts when the latent (untreated) SBP / TCHOL first exceeds
  // the threshold. Absent means the treatment never starts.
  std::optional<double> bpm_threshold;
  std::optional<double> statin_threshold;
  // Per-year treatment start hazards independent of the trajectories. With a
  // threshold as well, the earlier start wins.
  double bpm_start_rate = 0.0;
  double statin_start_rate = 0.0;

  std::uint64_t seed = 1;

  /// Throws ConfigError on any violated invariant, including a non-PSD sigma.
  void validate() const;
};

/// Latent quantities kept for oracle checks.
struct PersonTruth {
  std::int64_t person_id = 0;
  Eigen::Matrix<double, 2 * kNumFactors, 1> random_effects;
  double linear_predictor = 0.0;
  std::optional<double> uncensored_event_age;
};

struct SimulatedCohort {
  Cohort records;
  std::vector<PersonTruth> truth;
};

/// Deterministic given `config.seed`; each person draws from its own stream.
SimulatedCohort simulate_cohort_with_truth(const SimConfig& config);
Cohort simulate_cohort(const SimConfig& config);

/// Latent (noise-free) factor value at `age` under the generating model.
double latent_factor(const TrajectoryTruth& truth, const Eigen::Matrix<double, 2 * kNumFactors, 1>& u,
                     Factor f, double age, bool bpm, bool statin);

struct PracticeSplit {
  Cohort derivation;
  Cohort validation;
  std::vector<int> derivation_practices;
  std::vector<int> validation_practices;
};

/// Random allocation of whole practices; floor(fraction * n_practices) go to
/// the derivation side.
PracticeSplit split_practices(const Cohort& cohort, double fraction, std::uint64_t seed);

}  // namespace cvdsched
