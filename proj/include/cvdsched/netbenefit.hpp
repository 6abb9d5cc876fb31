#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cvdsched/landmark.hpp"
#include "cvdsched/survival.hpp"

namespace cvdsched {

/// Visits every `f` years from the landmark age up to la + 10.
struct Schedule {
  int f = 10;
  double la = 40.0;
  std::vector<double> visits;
};

Schedule make_schedule(int f, double la);

/// Willingness to pay, statin utility and costs, and statin hazard ratio.
struct NbParams {
  double lambda = 25000.0;  // GBP per QALY-year
  double u_s = 0.997;
  double c_s = 150.0;       // GBP per statin year
  double c_v = 18.39;       // GBP per visit
  double theta = 0.8;

  void validate() const;
};

struct StatinVisit {
  std::optional<int> k_star;  // 1-based visit index
  std::optional<double> tau;
  bool beyond_last_visit = false;  // t* fell after the final scheduled visit
};

/// First scheduled visit at or after t*.
StatinVisit statin_visit(const Schedule& schedule, std::optional<double> t_star);

/// k* when statins start, otherwise 1 + 10 / f.
double expected_visits(const Schedule& schedule, std::optional<int> k_star);

struct Efly {
  double ns = 0.0;  // event-free years before initiation
  double s = 0.0;   // event-free years after initiation
};

/// Exact integrals of the step survival over [la, tau] and [tau, la + 10].
Efly efly(const CoxFit& cox_10y, const Eigen::Ref<const Eigen::VectorXd>& x, double la,
          std::optional<double> tau, double theta);

template <class Scalar>
Scalar qaly(Scalar efly_ns, Scalar efly_s, Scalar u_s) {
  return efly_ns + u_s * efly_s;
}

template <class Scalar>
Scalar nb_cost(Scalar efly_s, Scalar e_visits, Scalar c_s, Scalar c_v) {
  return c_s * efly_s + c_v * e_visits;
}

/// lambda * QALY - cost.
template <class Scalar>
Scalar net_benefit(const NbParams& params, Scalar efly_ns, Scalar efly_s, Scalar e_visits) {
  return Scalar(params.lambda) * qaly(efly_ns, efly_s, Scalar(params.u_s)) -
         nb_cost(efly_s, e_visits, Scalar(params.c_s), Scalar(params.c_v));
}

/// Parameter-free terms for one schedule; NB is linear in lambda, u_s, c_s, c_v
/// given these.
struct NbTerms {
  int f = 10;
  std::optional<int> k_star;
  std::optional<double> tau;
  bool beyond_last_visit = false;
  double expected_visits = 0.0;
  double efly_ns = 0.0;
  double efly_s = 0.0;
};

struct NbRow {
  NbTerms terms;
  double qaly = 0.0;
  double cost = 0.0;
  double nb = 0.0;
};

struct NbEvaluation {
  std::int64_t person_id = 0;
  int la = 40;
  std::vector<NbRow> rows;
  int f_opt = 10;
};

inline constexpr std::array<int, 10> kDefaultFrequencies{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

std::vector<NbTerms> nb_terms(const RiskProfile& profile, const LandmarkModels& models, double theta,
                              std::span<const int> f_set);

/// Arg-max over schedules; ties (to 1e-12 relative) go to the larger f.
int argmax_frequency(const NbParams& params, std::span<const NbTerms> terms);

NbEvaluation optimal_schedule(const RiskProfile& profile, const LandmarkModels& models, const NbParams& params,
                              std::span<const int> f_set = kDefaultFrequencies);

/// Cached per-person terms reused across parameter sweeps.
struct NbCacheEntry {
  std::int64_t person_id = 0;
  std::string group;  // e.g. "M/40"
  std::vector<NbTerms> terms;
};

struct SweepGrid {
  std::string parameter;  // lambda, u_s, c_s or c_v
  std::vector<double> values;
};

struct SweepRow {
  std::string parameter;
  double value = 0.0;
  int f = 10;
  std::size_t count = 0;
  double proportion = 0.0;
  std::size_t n_changed = 0;  // persons whose optimum differs from the base parameters
};

NbParams with_parameter(NbParams base, const std::string& parameter, double value);

std::vector<SweepRow> sensitivity_sweep(std::span<const NbCacheEntry> cache, const NbParams& base,
                                        std::span<const SweepGrid> grids,
                                        std::span<const int> f_set = kDefaultFrequencies);

}  // namespace cvdsched
