#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Dense>

#include "cvdsched/cohort_sim.hpp"
#include "cvdsched/landmark.hpp"
#include "cvdsched/lmem.hpp"
#include "cvdsched/survival.hpp"

namespace testing {

using namespace cvdsched;

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cvdsched_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Random symmetric positive-definite matrix with eigenvalues in [lo, hi].
inline Eigen::MatrixXd random_spd(int n, std::mt19937_64& rng, double lo = 0.05, double hi = 1.0) {
  std::normal_distribution<double> norm;
  std::uniform_real_distribution<double> unif(lo, hi);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = norm(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd ev(n);
  for (int i = 0; i < n; ++i) ev[i] = unif(rng);
  Eigen::MatrixXd s = q * ev.asDiagonal() * q.transpose();
  return 0.5 * (s + s.transpose());
}

/// LmemFit with random parameters; slope variances are scaled down so the
/// random-effect covariance looks like a fitted one.
inline LmemFit random_lmem_fit(std::mt19937_64& rng, double age_center) {
  std::normal_distribution<double> norm;
  std::uniform_real_distribution<double> unif(0.2, 1.0);
  LmemFit fit;
  fit.age_center = age_center;
  fit.beta = Eigen::VectorXd(kNumFixedEffects);
  for (int j = 0; j < kNumFixedEffects; ++j) fit.beta[j] = norm(rng);
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(kNumRandomEffects);
  scale.tail(kNumFactors).setConstant(0.1);
  fit.sigma = scale.asDiagonal() * random_spd(kNumRandomEffects, rng) * scale.asDiagonal();
  fit.sigma_e = Eigen::VectorXd(kNumFactors);
  for (int k = 0; k < kNumFactors; ++k) fit.sigma_e[k] = unif(rng);
  fit.beta_cov = Eigen::MatrixXd::Identity(kNumFixedEffects, kNumFixedEffects);
  fit.converged = true;
  return fit;
}

inline std::vector<Measurement> random_history(std::mt19937_64& rng, int n, double from, double to) {
  std::uniform_real_distribution<double> age(from, to);
  std::uniform_int_distribution<int> factor(0, kNumFactors - 1);
  std::normal_distribution<double> norm;
  std::bernoulli_distribution flag(0.3);
  std::vector<Measurement> h;
  for (int j = 0; j < n; ++j)
    h.push_back({age(rng), static_cast<Factor>(factor(rng)), norm(rng), flag(rng), flag(rng)});
  std::sort(h.begin(), h.end(), [](const Measurement& a, const Measurement& b) { return a.age < b.age; });
  return h;
}

/// Conditional expectation of each outcome at `query_age` given `history`,
/// computed as the Gaussian conditional mean of the joint vector
/// (y_history, y_query) with a full-pivot LU solve. Shares no code with the
/// library's random-effect predictor.
inline Eigen::VectorXd dense_conditional_mean(const LmemFit& fit, const std::vector<Measurement>& history,
                                              double query_age) {
  const int fixed_index[kNumFactors] = {0, 2, 4, 7, 10};
  auto fixed_row = [&](Factor f, double age, bool bpm, bool statin) {
    Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(kNumFixedEffects);
    const int k = static_cast<int>(f);
    x[fixed_index[k]] = 1.0;
    x[fixed_index[k] + 1] = age - fit.age_center;
    if (f == Factor::sbp && bpm) x[6] = 1.0;
    if (f == Factor::tchol && statin) x[9] = 1.0;
    return x;
  };
  auto random_row = [&](Factor f, double age) {
    Eigen::RowVectorXd z = Eigen::RowVectorXd::Zero(kNumRandomEffects);
    const int k = static_cast<int>(f);
    z[k] = 1.0;
    z[kNumFactors + k] = age - fit.age_center;
    return z;
  };

  const auto n = static_cast<Eigen::Index>(history.size());
  Eigen::MatrixXd z_hist(n, kNumRandomEffects);
  Eigen::VectorXd mean_hist(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& m = history[static_cast<std::size_t>(i)];
    z_hist.row(i) = random_row(m.factor, m.age);
    mean_hist[i] = fixed_row(m.factor, m.age, m.bpm, m.statin).dot(fit.beta);
    y[i] = m.value;
  }
  Eigen::MatrixXd cov_hist = z_hist * fit.sigma * z_hist.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sd = fit.sigma_e[static_cast<int>(history[static_cast<std::size_t>(i)].factor)];
    cov_hist(i, i) += sd * sd;
  }
  const bool bpm = n > 0 && history.back().bpm;
  const bool statin = n > 0 && history.back().statin;

  Eigen::VectorXd out(kNumFactors);
  Eigen::VectorXd weights = n > 0 ? Eigen::VectorXd(cov_hist.fullPivLu().solve(y - mean_hist)) : Eigen::VectorXd();
  for (Factor f : kAllFactors) {
    const int k = static_cast<int>(f);
    double v = fixed_row(f, query_age, bpm, statin).dot(fit.beta);
    if (n > 0) {
      Eigen::RowVectorXd cross = random_row(f, query_age) * fit.sigma * z_hist.transpose();
      v += cross.dot(weights);
    }
    out[k] = v;
  }
  return out;
}

/// CoxFit with a hand-specified step baseline.
inline CoxFit step_fit(double origin, double horizon, std::vector<double> knot_times, std::vector<double> cumhaz,
                       Eigen::VectorXd beta = Eigen::VectorXd(), Eigen::VectorXd means = Eigen::VectorXd()) {
  CoxFit fit;
  fit.origin = origin;
  fit.horizon = horizon;
  knot_times.insert(knot_times.begin(), origin);
  cumhaz.insert(cumhaz.begin(), 0.0);
  fit.knot_time = Eigen::Map<Eigen::VectorXd>(knot_times.data(), static_cast<Eigen::Index>(knot_times.size()));
  fit.knot_cumhaz = Eigen::Map<Eigen::VectorXd>(cumhaz.data(), static_cast<Eigen::Index>(cumhaz.size()));
  fit.beta = beta.size() ? beta : Eigen::VectorXd::Zero(1);
  fit.covariate_means = means.size() ? means : Eigen::VectorXd::Zero(fit.beta.size());
  fit.se = Eigen::VectorXd::Zero(fit.beta.size());
  for (Eigen::Index j = 0; j < fit.beta.size(); ++j) fit.names.push_back("x" + std::to_string(j));
  return fit;
}

/// Constant-hazard baseline sampled on a uniform grid of `steps` intervals.
/// Knots sit at interval ends, so the step survival lags the continuous one
/// by at most one interval.
inline CoxFit constant_hazard_fit(double origin, double years, double rate, int steps) {
  std::vector<double> t, h;
  for (int j = 1; j <= steps; ++j) {
    const double dt = years * j / steps;
    t.push_back(origin + dt);
    h.push_back(rate * dt);
  }
  return step_fit(origin, origin + years, t, h);
}

inline SurvivalData make_data(const Eigen::MatrixXd& x, const Eigen::VectorXd& time, const std::vector<char>& event) {
  SurvivalData d;
  d.x = x;
  d.time = time;
  d.event = event;
  for (Eigen::Index c = 0; c < x.cols(); ++c) d.names.push_back("x" + std::to_string(c));
  d.person_id.resize(static_cast<std::size_t>(time.size()));
  return d;
}

// Two groups with exponential event times, hazard ratio exp(log_hr), and
// uniform administrative censoring on [0, horizon].
inline SurvivalData two_group(int n, double base_rate, double log_hr, double horizon, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> exp1(1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd x(n, 1);
  Eigen::VectorXd t(n);
  std::vector<char> e(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    x(i, 0) = i % 2;
    const double rate = base_rate * std::exp(log_hr * x(i, 0));
    const double event = exp1(rng) / rate;
    const double censor = horizon * (0.5 + 0.5 * unif(rng));
    t[i] = std::min(event, censor);
    e[static_cast<std::size_t>(i)] = event <= censor;
  }
  return make_data(x, t, e);
}

// Random increasing step baseline on [la, la + 10] plus a few knots past the
// window, with a random linear predictor.
struct RandomCase {
  CoxFit fit;
  Eigen::VectorXd x;
  std::optional<double> tau;
  double theta = 1.0;
};

inline RandomCase random_efly_case(std::mt19937_64& rng, double la) {
  std::uniform_int_distribution<int> n_knots(3, 40);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> norm;
  const int n = n_knots(rng);
  const double total = 0.05 + 1.5 * unif(rng);
  std::vector<double> t, h;
  for (int j = 0; j < n; ++j) t.push_back(la + 12.0 * unif(rng));
  std::sort(t.begin(), t.end());
  double acc = 0.0;
  for (int j = 0; j < n; ++j) {
    acc += total / n * 2.0 * unif(rng);
    h.push_back(acc);
  }
  Eigen::VectorXd beta(3), means(3), x(3);
  for (int j = 0; j < 3; ++j) {
    beta[j] = 0.5 * norm(rng);
    means[j] = norm(rng);
    x[j] = norm(rng);
  }
  RandomCase c{step_fit(la, la + 12.0, t, h, beta, means), x, std::nullopt, 0.3 + 0.7 * unif(rng)};
  if (unif(rng) < 0.8) c.tau = la + 10.0 * unif(rng);
  return c;
}

// Mean of min(T, la + 10) - la with T drawn from the step hazard, multiplied
// by theta after tau.
inline double monte_carlo_efly(const RandomCase& c, double la, int draws, std::mt19937_64& rng) {
  const double scale = std::exp((c.x - c.fit.covariate_means).dot(c.fit.beta));
  const double end = la + kTenYearWindow;
  const double tau = c.tau.value_or(end);
  auto cum_at = [&](double t) {
    double h = 0.0;
    for (Eigen::Index j = 0; j < c.fit.knot_time.size(); ++j)
      if (c.fit.knot_time[j] <= t) h = c.fit.knot_cumhaz[j];
    return h;
  };
  const double h_tau = cum_at(tau);
  // Effective cumulative hazard only changes at knots, so T is a knot time.
  std::vector<std::pair<double, double>> path;
  for (Eigen::Index j = 0; j < c.fit.knot_time.size(); ++j) {
    const double t = c.fit.knot_time[j];
    if (t > end) break;
    const double h = c.fit.knot_cumhaz[j];
    path.emplace_back(t, scale * (t < tau ? h : h_tau + c.theta * (h - h_tau)));
  }
  std::exponential_distribution<double> e(1.0);
  double sum = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double u = e(rng);
    double stop = end;
    for (const auto& [t, h] : path) {
      if (h >= u) {
        stop = t;
        break;
      }
    }
    sum += stop - la;
  }
  return sum / draws;
}

/// Simulator defaults with a well-conditioned trajectory model and simple
/// event process; tests override what they need.
inline SimConfig small_config(std::int64_t n, std::uint64_t seed) {
  SimConfig c;
  c.n_persons = n;
  c.n_practices = 12;
  c.seed = seed;
  c.entry_age_min = 35.0;
  c.entry_age_max = 70.0;
  c.admin_years = 20.0;
  auto& tr = c.trajectory;
  tr.age_center = 55.0;
  tr.intercept << 0.3, -0.2, 0.1, 0.4, -0.1;
  tr.slope << -0.02, 0.01, 0.03, 0.01, 0.02;
  tr.bpm_effect = -0.5;
  tr.statin_effect = -0.8;
  tr.sigma.setZero();
  for (int k = 0; k < kNumFactors; ++k) {
    tr.sigma(k, k) = 0.6;
    tr.sigma(kNumFactors + k, kNumFactors + k) = 0.0004;
    tr.sigma(k, kNumFactors + k) = tr.sigma(kNumFactors + k, k) = -0.003;
  }
  tr.sigma(2, 3) = tr.sigma(3, 2) = 0.15;
  tr.sigma_e << 0.4, 0.4, 0.45, 0.45, 0.4;
  c.cox.factors << 0.5, -0.4, 0.6, 0.4, 0.2;
  c.cox.diabetes = 0.7;
  c.baseline_hazard = PiecewiseHazard{{0.0, 50.0, 60.0, 70.0}, {0.002, 0.005, 0.01, 0.02}};
  c.visit_rate = 0.6;
  c.missing_prob.setConstant(0.2);
  c.censor_rate = 0.02;
  c.prevalence.diabetes = 0.08;
  c.prevalence.depression = 0.1;
  return c;
}

/// LMEM recovery design: ~6 visits per person over 15 years, every factor
/// measured at each visit, treatment starts independent of the trajectories.
inline SimConfig recovery_config(std::int64_t n, std::uint64_t seed) {
  SimConfig cfg = small_config(n, seed);
  cfg.baseline_hazard = PiecewiseHazard::constant(0.0);
  cfg.censor_rate = 0.0;
  cfg.missing_prob.setZero();
  cfg.visit_rate = 0.4;
  cfg.admin_years = 15.0;
  cfg.bpm_start_rate = 0.04;
  cfg.statin_start_rate = 0.04;
  auto& sigma = cfg.trajectory.sigma;
  for (int k = 0; k < kNumFactors; ++k) {
    sigma(kNumFactors + k, kNumFactors + k) = 0.05 * 0.05;
    sigma(k, kNumFactors + k) = sigma(kNumFactors + k, k) = -0.2 * std::sqrt(sigma(k, k)) * 0.05;
  }
  return cfg;
}

/// Fixed effects of the generating trajectory model re-centred at `center`.
inline Eigen::VectorXd generating_beta(const TrajectoryTruth& tr, double center) {
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(kNumFixedEffects);
  for (Factor f : kAllFactors) {
    const int k = static_cast<int>(f);
    beta[intercept_index(f)] = tr.intercept[k] + tr.slope[k] * (center - tr.age_center);
    beta[slope_index(f)] = tr.slope[k];
  }
  beta[kBpmEffectIndex] = tr.bpm_effect;
  beta[kStatinEffectIndex] = tr.statin_effect;
  return beta;
}

}  // namespace testing
