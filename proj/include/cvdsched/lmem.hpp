#pragma once

#include <array>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cvdsched/types.hpp"

namespace cvdsched {

/// Non-owning subset of a cohort.
using CohortView = std::vector<const LongitudinalRecord*>;
CohortView view_of(const Cohort& cohort);

// Fixed-effect layout of the stacked model:
//   smoke(int, slope) hdl(int, slope) sbp(int, slope, bpm) tchol(int, slope, statin) bmi(int, slope)
inline constexpr int kNumFixedEffects = 12;
inline constexpr int kBpmEffectIndex = 6;
inline constexpr int kStatinEffectIndex = 9;
// Random effects: 5 intercepts followed by 5 slopes.
inline constexpr int kNumRandomEffects = 2 * kNumFactors;

int intercept_index(Factor f);
int slope_index(Factor f);

struct LmemSpec {
  double convergence_tol = 1e-7;  // relative log-likelihood change
  int max_iter = 3000;
  bool reml = false;
  bool accelerate = true;   // squared extrapolation of the EM map
  double age_center = 0.0;  // ages enter the model as (age - age_center)

  void validate() const;
};

struct LmemFit {
  Eigen::VectorXd beta;       // kNumFixedEffects
  Eigen::MatrixXd beta_cov;   // inverse GLS information at the final parameters
  Eigen::MatrixXd sigma;      // kNumRandomEffects square
  Eigen::VectorXd sigma_e;    // residual SD per factor
  double age_center = 0.0;
  double log_likelihood = 0.0;
  std::vector<double> loglik_trace;  // one entry per EM iteration
  int n_iterations = 0;
  bool converged = false;
  bool reml = false;
  int n_persons = 0;
  std::array<int, kNumFactors> n_obs{};

  Eigen::VectorXd beta_se() const { return beta_cov.diagonal().cwiseSqrt(); }
};

/// Multivariate linear mixed model with correlated random intercepts and
/// slopes, fitted by ECME: generalized least squares for the fixed effects
/// alternating with EM updates of the covariance parameters.
LmemFit fit_lmem(const CohortView& records, const LmemSpec& spec);

struct BlupVector {
  Eigen::Matrix<double, kNumFactors, 1> values;
  double query_age = 0.0;
  double history_cutoff = 0.0;  // no measurement after this age was used
  std::array<int, kNumFactors> n_past_obs{};

  double operator[](Factor f) const { return values[static_cast<int>(f)]; }
};

/// Prefix of `r.measurements` with age <= cutoff.
std::span<const Measurement> past_history(const LongitudinalRecord& r, double cutoff);

/// Conditional expectation of every factor at `query_age` given `history`.
/// BPM and statin terms carry the last observed flags forward.
BlupVector blup(const LmemFit& fit, std::span<const Measurement> history, double query_age,
                double history_cutoff);

/// Predicted random effects for one history (zero for an empty history).
Eigen::VectorXd predict_random_effects(const LmemFit& fit, std::span<const Measurement> history);

}  // namespace cvdsched
