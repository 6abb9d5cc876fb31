#include "cvdsched/survival.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace cvdsched {

namespace {

constexpr int kMaxNewtonIter = 50;
constexpr double kStepTol = 1e-8;
constexpr double kDivergence = 50.0;
constexpr double kTimeEps = 1e-9;

struct PartialLikelihood {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd info;
};

// Breslow partial likelihood over subjects sorted by decreasing time.
PartialLikelihood breslow(const Eigen::MatrixXd& xc, const Eigen::VectorXd& time,
                          const std::vector<char>& event, const std::vector<Eigen::Index>& order,
                          const Eigen::VectorXd& beta, bool with_info) {
  const Eigen::Index p = xc.cols();
  PartialLikelihood out;
  out.score = Eigen::VectorXd::Zero(p);
  out.info = Eigen::MatrixXd::Zero(p, p);
  const Eigen::VectorXd eta = xc * beta;
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xsum(p);
  const std::size_t n = order.size();
  std::size_t i = 0;
  while (i < n) {
    const double t = time[order[i]];
    int d = 0;
    xsum.setZero();
    std::size_t j = i;
    for (; j < n && time[order[j]] == t; ++j) {
      const Eigen::Index r = order[j];
      const double w = std::exp(eta[r]);
      s0 += w;
      s1.noalias() += w * xc.row(r).transpose();
      if (with_info) s2.noalias() += w * xc.row(r).transpose() * xc.row(r);
      if (event[static_cast<std::size_t>(r)]) {
        ++d;
        xsum.noalias() += xc.row(r).transpose();
        out.loglik += eta[r];
      }
    }
    if (d > 0) {
      const Eigen::VectorXd mean = s1 / s0;
      out.loglik -= d * std::log(s0);
      out.score.noalias() += xsum - d * mean;
      if (with_info) out.info.noalias() += d * (s2 / s0 - mean * mean.transpose());
    }
    i = j;
  }
  return out;
}

}  // namespace

void StatinEffect::validate() const {
  if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("statin hazard ratio theta must lie in (0, 1]");
}

CoxFit fit_cox(const SurvivalData& data, double origin, double horizon) {
  const Eigen::Index n = data.size();
  const Eigen::Index p = data.x.cols();
  if (!(horizon > origin)) throw ConfigError("Cox horizon must exceed origin");
  if (data.x.rows() != n || static_cast<Eigen::Index>(data.event.size()) != n)
    throw DataError("survival data columns have inconsistent lengths");
  if (!data.x.allFinite() || !data.time.allFinite()) throw DataError("non-finite covariate or time");
  int n_events = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(data.time[i] > 0.0)) throw DataError("survival times must be > 0");
    if (data.time[i] > horizon - origin + kTimeEps) throw DataError("survival time beyond the horizon");
    n_events += data.event[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  if (n_events == 0) throw DataError("no events");

  CoxFit fit;
  fit.names = data.names;
  fit.origin = origin;
  fit.horizon = horizon;
  fit.n_events = n_events;
  fit.n_obs = static_cast<int>(n);
  fit.covariate_means = data.x.colwise().mean().transpose();
  Eigen::MatrixXd xc = data.x.rowwise() - fit.covariate_means.transpose();

  // Covariates with no spread carry no information; they stay at zero.
  std::vector<Eigen::Index> informative;
  for (Eigen::Index c = 0; c < p; ++c)
    if (xc.col(c).cwiseAbs().maxCoeff() > 0.0) informative.push_back(c);
  const auto q = static_cast<Eigen::Index>(informative.size());
  Eigen::MatrixXd xi(n, q);
  for (Eigen::Index c = 0; c < q; ++c) xi.col(c) = xc.col(informative[static_cast<std::size_t>(c)]);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return data.time[a] > data.time[b]; });

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
  PartialLikelihood pl = breslow(xi, data.time, data.event, order, beta, true);
  int iter = 0;
  if (q > 0) {
    for (; iter < kMaxNewtonIter; ++iter) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(pl.info);
      if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
        throw NumericError("Cox information matrix is singular");
      Eigen::VectorXd step = ldlt.solve(pl.score);
      Eigen::VectorXd next = beta + step;
      PartialLikelihood trial = breslow(xi, data.time, data.event, order, next, true);
      // Step halving guards against overshooting on flat likelihoods.
      for (int h = 0; h < 30 && !(trial.loglik >= pl.loglik - 1e-12 * std::abs(pl.loglik)); ++h) {
        step *= 0.5;
        next = beta + step;
        trial = breslow(xi, data.time, data.event, order, next, true);
      }
      beta = next;
      pl = std::move(trial);
      if (beta.cwiseAbs().maxCoeff() > kDivergence)
        throw NumericError("Cox coefficients diverge (monotone likelihood)");
      if (step.cwiseAbs().maxCoeff() < kStepTol) {
        ++iter;
        break;
      }
    }
  }
  fit.n_iterations = iter;
  fit.log_likelihood = pl.loglik;
  fit.max_abs_score = q > 0 ? pl.score.cwiseAbs().maxCoeff() : 0.0;

  fit.beta = Eigen::VectorXd::Zero(p);
  fit.se = Eigen::VectorXd::Constant(p, std::numeric_limits<double>::infinity());
  if (q > 0) {
    Eigen::MatrixXd cov = pl.info.ldlt().solve(Eigen::MatrixXd::Identity(q, q));
    for (Eigen::Index c = 0; c < q; ++c) {
      fit.beta[informative[static_cast<std::size_t>(c)]] = beta[c];
      fit.se[informative[static_cast<std::size_t>(c)]] = std::sqrt(cov(c, c));
    }
  }

  // Breslow increments at the centered covariate, ascending in time.
  const Eigen::VectorXd eta = xi * beta;
  std::vector<double> times{origin}, cumhaz{0.0};
  double s0 = 0.0;
  std::vector<std::pair<double, double>> increments;  // (time, d / s0)
  std::size_t i = 0;
  const std::size_t nn = order.size();
  while (i < nn) {
    const double t = data.time[order[i]];
    int d = 0;
    std::size_t j = i;
    for (; j < nn && data.time[order[j]] == t; ++j) {
      s0 += std::exp(eta[order[j]]);
      d += data.event[static_cast<std::size_t>(order[j])] ? 1 : 0;
    }
    if (d > 0) increments.emplace_back(t, d / s0);
    i = j;
  }
  double acc = 0.0;
  for (auto it = increments.rbegin(); it != increments.rend(); ++it) {
    acc += it->second;
    times.push_back(origin + it->first);
    cumhaz.push_back(acc);
  }
  fit.knot_time = Eigen::Map<Eigen::VectorXd>(times.data(), static_cast<Eigen::Index>(times.size()));
  fit.knot_cumhaz = Eigen::Map<Eigen::VectorXd>(cumhaz.data(), static_cast<Eigen::Index>(cumhaz.size()));
  return fit;
}

double linear_predictor(const CoxFit& fit, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != fit.beta.size()) throw DataError("covariate vector has the wrong length");
  if (!x.allFinite()) throw DataError("non-finite covariate");
  return (x - fit.covariate_means).dot(fit.beta);
}

double baseline_cumhaz(const CoxFit& fit, double t) {
  const double* begin = fit.knot_time.data();
  const double* end = begin + fit.knot_time.size();
  const double* it = std::upper_bound(begin, end, t);
  if (it == begin) return 0.0;
  return fit.knot_cumhaz[(it - begin) - 1];
}

namespace {
void check_window(const CoxFit& fit, double t) {
  if (t < fit.origin - kTimeEps || t > fit.horizon + kTimeEps)
    throw DataError("evaluation time outside the fitted window [origin, horizon]");
}
}  // namespace

double survival_ns(const CoxFit& fit, const Eigen::Ref<const Eigen::VectorXd>& x, double t) {
  check_window(fit, t);
  return survival_from_cumhaz(baseline_cumhaz(fit, t), linear_predictor(fit, x));
}

double survival_s(const CoxFit& fit, const Eigen::Ref<const Eigen::VectorXd>& x, double t,
                  double tau_star, StatinEffect effect) {
  effect.validate();
  if (t < tau_star) throw DataError("survival_s requires t >= tau_star");
  check_window(fit, tau_star);
  check_window(fit, t);
  return statin_survival(survival_ns(fit, x, tau_star), survival_ns(fit, x, t), effect.theta);
}

double risk_window(const CoxFit& fit, const Eigen::Ref<const Eigen::VectorXd>& x, double s, double w) {
  if (std::abs(fit.origin - s) > kTimeEps) throw DataError("risk window origin differs from the fit origin");
  return 1.0 - survival_ns(fit, x, s + w);
}

StepCurve nelson_aalen(const Eigen::Ref<const Eigen::VectorXd>& time, const std::vector<char>& event) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(time.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return time[a] < time[b]; });
  StepCurve out;
  double at_risk = static_cast<double>(time.size());
  double acc = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = time[order[i]];
    int d = 0, leaving = 0;
    for (; i < order.size() && time[order[i]] == t; ++i, ++leaving)
      d += event[static_cast<std::size_t>(order[i])] ? 1 : 0;
    if (d > 0) {
      acc += d / at_risk;
      out.time.push_back(t);
      out.value.push_back(acc);
    }
    at_risk -= leaving;
  }
  return out;
}

}  // namespace cvdsched
