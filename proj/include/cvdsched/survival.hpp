#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cvdsched/types.hpp"

namespace cvdsched {

/// Right-censored data for one Cox fit. `time` is measured from the origin.
struct SurvivalData {
  std::vector<std::string> names;
  Eigen::MatrixXd x;  // one row per subject
  Eigen::VectorXd time;
  std::vector<char> event;  // 1 = event, 0 = censored
  std::vector<std::int64_t> person_id;

  Eigen::Index size() const { return time.size(); }
};

/// Cox proportional hazards fit with a Breslow step baseline.
///
/// The baseline is stored at the centered covariate (x = covariate_means),
/// so every evaluation uses the linear predictor (x - covariate_means)' beta.
/// Knot times are absolute (same scale as origin and horizon).
struct CoxFit {
  std::vector<std::string> names;
  Eigen::VectorXd beta;
  Eigen::VectorXd se;  // +inf for covariates without information
  Eigen::VectorXd covariate_means;
  Eigen::VectorXd knot_time;    // starts at origin
  Eigen::VectorXd knot_cumhaz;  // starts at 0, non-decreasing
  double origin = 0.0;
  double horizon = 0.0;
  int n_events = 0;
  int n_obs = 0;
  int n_iterations = 0;
  double log_likelihood = 0.0;
  double max_abs_score = 0.0;
  std::vector<std::string> held_at_zero;  // separated covariates fixed at beta = 0
};

struct StatinEffect {
  double theta = 0.8;  // hazard ratio after initiation, in (0, 1]
  void validate() const;
};

/// Newton-Raphson on the Breslow partial likelihood with mean-centered
/// covariates; stops when the largest step is below 1e-8 or after 50
/// iterations. Times must already be truncated at horizon - origin.
CoxFit fit_cox(const SurvivalData& data, double origin, double horizon);

double linear_predictor(const CoxFit& fit, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Right-continuous step evaluation of the centered baseline.
double baseline_cumhaz(const CoxFit& fit, double t);

template <class Scalar>
Scalar survival_from_cumhaz(Scalar cumhaz, Scalar lp) {
  using std::exp;
  return exp(-cumhaz * exp(lp));
}

/// Survival after initiation at tau: S(tau) * (S(t) / S(tau))^theta.
template <class Scalar>
Scalar statin_survival(Scalar s_tau, Scalar s_t, Scalar theta) {
  using std::pow;
  if (s_tau <= Scalar(0)) return Scalar(0);
  return s_tau * pow(s_t / s_tau, theta);
}

double survival_ns(const CoxFit& fit, const Eigen::Ref<const Eigen::VectorXd>& x, double t);
double survival_s(const CoxFit& fit, const Eigen::Ref<const Eigen::VectorXd>& x, double t,
                  double tau_star, StatinEffect effect);
/// 1 - S(s + w) for a fit anchored at origin s.
double risk_window(const CoxFit& fit, const Eigen::Ref<const Eigen::VectorXd>& x, double s, double w);

/// Nelson-Aalen cumulative hazard at each distinct event time.
struct StepCurve {
  std::vector<double> time;
  std::vector<double> value;
};
StepCurve nelson_aalen(const Eigen::Ref<const Eigen::VectorXd>& time, const std::vector<char>& event);

}  // namespace cvdsched
