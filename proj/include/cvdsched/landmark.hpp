#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cvdsched/lmem.hpp"
#include "cvdsched/survival.hpp"
#include "cvdsched/types.hpp"

namespace cvdsched {

inline constexpr std::array<int, 9> kLandmarkGrid{40, 45, 50, 55, 60, 65, 70, 75, 80};
inline constexpr int kPredictionSteps = 11;  // s = la, la+1, ..., la+10
inline constexpr double kTenYearWindow = 10.0;
inline constexpr double kFiveYearWindow = 5.0;
inline constexpr double kRiskThreshold = 0.05;
// Conditions that only enter the Cox models from this landmark age on.
inline constexpr int kLateConditionAge = 60;

class LandmarkAge {
 public:
  explicit LandmarkAge(int years);
  int value() const { return years_; }
  double age() const { return static_cast<double>(years_); }
  double prediction_time(int step) const { return age() + step; }

 private:
  int years_;
};

enum class RiskClass { very_high, high, med_high, med_low, low };
std::string_view risk_class_name(RiskClass c);
RiskClass classify_risk(double five_year_risk);

enum class TownsendMode { numeric, dummies };

struct CovariatePolicy {
  bool late_conditions = false;
  TownsendMode townsend = TownsendMode::numeric;

  static CovariatePolicy for_landmark(LandmarkAge la, TownsendMode mode) {
    return {la.value() >= kLateConditionAge, mode};
  }
  std::vector<std::string> names() const;
};

/// Cox covariate vector: BLUP factors first, then fixed covariates known at
/// `covariate_age`.
Eigen::VectorXd covariate_vector(const CovariatePolicy& policy, const BlupVector& blups,
                                 const LongitudinalRecord& person, double covariate_age);

struct LandmarkOptions {
  LmemSpec lmem;  // age_center is overwritten with the landmark age
  TownsendMode townsend = TownsendMode::numeric;
};

struct LandmarkModels {
  int la = 40;
  CovariatePolicy policy;
  LmemFit lmem_fit;
  CoxFit cox_10y;
  std::array<std::optional<CoxFit>, kPredictionSteps> cox_5y;
  std::array<std::string, kPredictionSteps> unfittable_reason;
  int landmark_cohort_size = 0;
  std::array<int, kPredictionSteps> subcohort_size{};
};

/// Persons enrolled at `la`, event-free, alive, and not yet on statins.
CohortView build_landmark_cohort(const CohortView& cohort, double la);
/// Landmark-cohort members still event-free and in follow-up at `s`.
CohortView build_subcohort(const CohortView& landmark_cohort, double la, double s);

/// Survival rows with BLUPs computed from history up to `origin`.
SurvivalData landmark_survival_data(const LmemFit& fit, const CovariatePolicy& policy,
                                    const CohortView& persons, double origin, double window);

/// Zeroes 0/1 columns whose events all fall on one level (the partial
/// likelihood has no finite maximum there), so fit_cox reports beta = 0 with
/// infinite SE. Returns the affected names.
std::vector<std::string> hold_separated_covariates(SurvivalData& data);

LandmarkModels fit_landmark_models(const CohortView& derivation_cohort, LandmarkAge la,
                                   const LandmarkOptions& options);

struct RiskProfile {
  std::int64_t person_id = 0;
  int la = 40;
  std::array<std::optional<double>, kPredictionSteps> risks;
  std::optional<double> t_star;
  RiskClass risk_class = RiskClass::low;
  Eigen::VectorXd x_landmark;  // cox_10y covariates at la
  double history_cutoff = 0.0;
};

RiskProfile risk_profile(const LandmarkModels& models, const LongitudinalRecord& person, LandmarkAge la);

/// Linear interpolation between the last grid point at or below `threshold`
/// and the first strictly above it. risks[j] belongs to time la + j; absent
/// entries are skipped.
std::optional<double> crossing_time(std::span<const std::optional<double>> risks, double la,
                                    double threshold = kRiskThreshold);

}  // namespace cvdsched
