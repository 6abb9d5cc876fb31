#include "cvdsched/lmem.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace cvdsched {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// Position of each factor's extra treatment column, or -1.
constexpr int treatment_index(Factor f) {
  return f == Factor::sbp ? kBpmEffectIndex : f == Factor::tchol ? kStatinEffectIndex : -1;
}

using RowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

// Full-width design row for one measurement.
void design_row(const Measurement& m, double age_center, RowRef xrow, RowRef zrow) {
  const int k = static_cast<int>(m.factor);
  const double t = m.age - age_center;
  xrow.setZero();
  zrow.setZero();
  xrow[intercept_index(m.factor)] = 1.0;
  xrow[slope_index(m.factor)] = t;
  if (m.factor == Factor::sbp) xrow[kBpmEffectIndex] = m.bpm ? 1.0 : 0.0;
  if (m.factor == Factor::tchol) xrow[kStatinEffectIndex] = m.statin ? 1.0 : 0.0;
  zrow[k] = 1.0;
  zrow[kNumFactors + k] = t;
}

using Mat10 = Eigen::Matrix<double, kNumRandomEffects, kNumRandomEffects>;
using Vec10 = Eigen::Matrix<double, kNumRandomEffects, 1>;
using Mat10X = Eigen::Matrix<double, kNumRandomEffects, Eigen::Dynamic>;
using Vec5 = Eigen::Matrix<double, kNumFactors, 1>;

// Unweighted cross products of one person's design. Rows of different
// factors share no nonzero column, so every X/Z cross product is block
// diagonal by factor and the residual weights act as column scalings.
struct PersonStats {
  Eigen::MatrixXd xtx;  // p x p
  Mat10X ztx;           // 10 x p
  Mat10 ztz;
  Eigen::VectorXd xty;
  Vec10 zty;
  Vec5 yty;
  Vec5 n;
};

struct Accumulator {
  Eigen::MatrixXd xtvx;
  Eigen::VectorXd xtvy;
  Mat10 sigma_sum = Mat10::Zero();
  Vec5 resid_sum = Vec5::Zero();
  double loglik = 0.0;

  explicit Accumulator(int p) : xtvx(Eigen::MatrixXd::Zero(p, p)), xtvy(Eigen::VectorXd::Zero(p)) {}
};

// Fixed-size person blocks keep the reduction order independent of the
// thread count.
constexpr std::size_t kBlockSize = 64;

template <class Fn>
Accumulator reduce_blocks(std::size_t n, int p, Fn&& fn) {
  const std::size_t nblocks = (n + kBlockSize - 1) / kBlockSize;
  std::vector<Accumulator> partial(nblocks, Accumulator(p));
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(nblocks); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlockSize;
    const std::size_t hi = std::min(n, lo + kBlockSize);
    for (std::size_t i = lo; i < hi; ++i) fn(i, partial[static_cast<std::size_t>(b)]);
  }
  Accumulator total(p);
  for (const auto& a : partial) {
    total.xtvx += a.xtvx;
    total.xtvy += a.xtvy;
    total.sigma_sum += a.sigma_sum;
    total.resid_sum += a.resid_sum;
    total.loglik += a.loglik;
  }
  return total;
}

// Square-root factor of a PSD matrix; negative rounding noise is clipped.
Mat10 psd_sqrt(const Mat10& sigma) {
  Eigen::SelfAdjointEigenSolver<Mat10> es(sigma);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace

CohortView view_of(const Cohort& cohort) {
  CohortView v;
  v.reserve(cohort.size());
  for (const auto& r : cohort) v.push_back(&r);
  return v;
}

int intercept_index(Factor f) {
  static constexpr int idx[kNumFactors] = {0, 2, 4, 7, 10};
  return idx[static_cast<int>(f)];
}

int slope_index(Factor f) { return intercept_index(f) + 1; }

void LmemSpec::validate() const {
  if (!(convergence_tol > 0.0)) throw ConfigError("LMEM convergence_tol must be > 0");
  if (max_iter < 1) throw ConfigError("LMEM max_iter must be >= 1");
  if (!std::isfinite(age_center)) throw ConfigError("LMEM age_center must be finite");
}

LmemFit fit_lmem(const CohortView& records, const LmemSpec& spec) {
  spec.validate();
  std::vector<const LongitudinalRecord*> persons;
  for (const auto* r : records)
    if (!r->measurements.empty()) persons.push_back(r);
  if (persons.size() < 2) throw DataError("LMEM needs at least 2 persons with measurements");

  // Treatment columns are only estimable when the indicator varies.
  std::array<int, kNumFactors> n_obs{};
  std::array<bool, 2> seen_off{}, seen_on{};
  std::array<double, kNumFactors> ysum{}, ysq{};
  for (const auto* r : persons)
    for (const auto& m : r->measurements) {
      const int k = static_cast<int>(m.factor);
      if (!std::isfinite(m.age) || !std::isfinite(m.value)) throw DataError("non-finite measurement");
      ++n_obs[k];
      ysum[k] += m.value;
      ysq[k] += m.value * m.value;
      if (m.factor == Factor::sbp) (m.bpm ? seen_on : seen_off)[0] = true;
      if (m.factor == Factor::tchol) (m.statin ? seen_on : seen_off)[1] = true;
    }
  for (Factor f : kAllFactors)
    if (n_obs[static_cast<int>(f)] == 0)
      throw DataError("LMEM outcome '" + std::string(factor_name(f)) + "' has no observations");

  std::vector<int> active;
  for (int j = 0; j < kNumFixedEffects; ++j) {
    if (j == kBpmEffectIndex && !(seen_on[0] && seen_off[0])) continue;
    if (j == kStatinEffectIndex && !(seen_on[1] && seen_off[1])) continue;
    active.push_back(j);
  }
  const int p = static_cast<int>(active.size());
  std::vector<int> x_factor(static_cast<std::size_t>(p));
  for (int c = 0; c < p; ++c)
    for (Factor f : kAllFactors)
      if (active[static_cast<std::size_t>(c)] == intercept_index(f) ||
          active[static_cast<std::size_t>(c)] == slope_index(f) ||
          active[static_cast<std::size_t>(c)] == treatment_index(f))
        x_factor[static_cast<std::size_t>(c)] = static_cast<int>(f);

  std::vector<PersonStats> stats(persons.size());
  {
    Eigen::RowVectorXd xfull(kNumFixedEffects), zrow(kNumRandomEffects);
    Eigen::VectorXd xa(p);
    for (std::size_t i = 0; i < persons.size(); ++i) {
      auto& st = stats[i];
      st.xtx = Eigen::MatrixXd::Zero(p, p);
      st.ztx = Mat10X::Zero(kNumRandomEffects, p);
      st.ztz.setZero();
      st.xty = Eigen::VectorXd::Zero(p);
      st.zty.setZero();
      st.yty.setZero();
      st.n.setZero();
      for (const auto& m : persons[i]->measurements) {
        design_row(m, spec.age_center, xfull, zrow);
        for (int c = 0; c < p; ++c) xa[c] = xfull[active[static_cast<std::size_t>(c)]];
        const Vec10 z = zrow.transpose();
        st.xtx.noalias() += xa * xa.transpose();
        st.ztx.noalias() += z * xa.transpose();
        st.ztz.noalias() += z * z.transpose();
        st.xty += m.value * xa;
        st.zty += m.value * z;
        const int k = static_cast<int>(m.factor);
        st.yty[k] += m.value * m.value;
        st.n[k] += 1.0;
      }
    }
  }
  auto x_cols_of = [&](int k) {
    std::vector<int> cols;
    for (int c = 0; c < p; ++c)
      if (x_factor[static_cast<std::size_t>(c)] == k) cols.push_back(c);
    return cols;
  };
  std::array<std::vector<int>, kNumFactors> x_cols;
  for (int k = 0; k < kNumFactors; ++k) x_cols[static_cast<std::size_t>(k)] = x_cols_of(k);

  // Per-factor residual sum of squares r_k' r_k at beta.
  auto factor_rss = [&](const PersonStats& st, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd xtxb = st.xtx * beta;
    Vec5 out = st.yty;
    for (int c = 0; c < p; ++c)
      out[x_factor[static_cast<std::size_t>(c)]] += beta[c] * (xtxb[c] - 2.0 * st.xty[c]);
    return out;
  };

  // Starting values: pooled OLS, half the residual variance to each level.
  Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
  for (const auto& st : stats) {
    xtx += st.xtx;
    xty += st.xty;
  }
  Eigen::VectorXd beta = xtx.ldlt().solve(xty);
  Vec5 rss = Vec5::Zero(), tsum = Vec5::Zero(), tsq = Vec5::Zero();
  for (const auto& st : stats) {
    rss += factor_rss(st, beta);
    for (int k = 0; k < kNumFactors; ++k) {
      tsum[k] += st.ztz(k, kNumFactors + k);
      tsq[k] += st.ztz(kNumFactors + k, kNumFactors + k);
    }
  }
  Vec5 floor_var, sigma2;
  Mat10 sigma = Mat10::Zero();
  for (int k = 0; k < kNumFactors; ++k) {
    const double nk = n_obs[k];
    const double var_y = std::max(ysq[k] / nk - (ysum[k] / nk) * (ysum[k] / nk), 0.0);
    floor_var[k] = 1e-10 * std::max(var_y, 1e-8);
    const double v = std::max(0.5 * std::max(rss[k], 0.0) / nk, floor_var[k]);
    const double var_t = std::max(tsq[k] / nk - (tsum[k] / nk) * (tsum[k] / nk), 1.0);
    sigma2[k] = v;
    sigma(k, k) = v;
    sigma(kNumFactors + k, kNumFactors + k) = v / (4.0 * var_t);
  }

  LmemFit fit;
  fit.age_center = spec.age_center;
  fit.reml = spec.reml;
  fit.n_persons = static_cast<int>(persons.size());
  fit.n_obs = n_obs;

  // With Sigma = L L', V^-1 = R^-1 - R^-1 Z L A^-1 L' Z' R^-1 where
  // A = I + L' Z' R^-1 Z L; all person terms reduce to 10 x 10 algebra.
  std::vector<Eigen::LLT<Mat10>> chol(stats.size());
  struct Step {
    Mat10 sigma;
    Vec5 sigma2;
    double ll = 0.0;
    Eigen::VectorXd beta;
    Eigen::MatrixXd info_inv;
    Mat10 next_sigma;
    Vec5 next_sigma2;
  };
  // One ECME map: GLS beta and the log-likelihood at (sigma, sigma2), plus
  // the EM update of the covariance parameters.
  auto evaluate = [&](const Mat10& sigma, const Vec5& sigma2) {
    Eigen::VectorXd beta;
    Eigen::MatrixXd info_inv;
    const Mat10 l = psd_sqrt(sigma);
    Vec10 wz;
    for (int c = 0; c < kNumRandomEffects; ++c) wz[c] = 1.0 / sigma2[c % kNumFactors];
    Eigen::VectorXd wx(p);
    for (int c = 0; c < p; ++c) wx[c] = 1.0 / sigma2[x_factor[static_cast<std::size_t>(c)]];

    // GLS for the fixed effects at the current covariance parameters.
    Accumulator gls = reduce_blocks(stats.size(), p, [&](std::size_t i, Accumulator& acc) {
      const auto& st = stats[i];
      const Mat10 a = Mat10::Identity() + l.transpose() * wz.asDiagonal() * st.ztz * l;
      chol[i].compute(a);
      const Mat10X g = l.transpose() * wz.asDiagonal() * st.ztx;
      const Mat10X ag = chol[i].solve(g);
      acc.xtvx.noalias() += wx.asDiagonal() * st.xtx;
      acc.xtvx.noalias() -= g.transpose() * ag;
      acc.xtvy += wx.cwiseProduct(st.xty);
      acc.xtvy.noalias() -= ag.transpose() * (l.transpose() * wz.cwiseProduct(st.zty));
    });
    for (const auto& c : chol)
      if (c.info() != Eigen::Success) throw NumericError("LMEM marginal covariance lost positive definiteness");
    gls.xtvx = 0.5 * (gls.xtvx + gls.xtvx.transpose());
    Eigen::LDLT<Eigen::MatrixXd> xtvx_ldlt(gls.xtvx);
    if (xtvx_ldlt.info() != Eigen::Success || !(xtvx_ldlt.vectorD().array() > 0.0).all())
      throw NumericError("LMEM fixed-effect information is singular");
    beta = xtvx_ldlt.solve(gls.xtvy);
    info_inv = xtvx_ldlt.solve(Eigen::MatrixXd::Identity(p, p));

    // E-step moments at (beta, sigma, sigma2).
    Accumulator em = reduce_blocks(stats.size(), p, [&](std::size_t i, Accumulator& acc) {
      const auto& st = stats[i];
      const auto& llt = chol[i];
      const Vec10 ztr = st.zty - st.ztx * beta;
      const Vec5 rtr = factor_rss(st, beta);
      const Vec10 h = l.transpose() * wz.cwiseProduct(ztr);
      const Vec10 ah = llt.solve(h);
      double logdet = 0.0, quad = -h.dot(ah), nobs = 0.0;
      for (int k = 0; k < kNumFactors; ++k) {
        logdet += st.n[k] * std::log(sigma2[k]);
        quad += rtr[k] / sigma2[k];
        nobs += st.n[k];
      }
      const auto& lm = llt.matrixLLT();
      for (int c = 0; c < kNumRandomEffects; ++c) logdet += 2.0 * std::log(lm(c, c));
      acc.loglik += -0.5 * (nobs * kLog2Pi + logdet + quad);

      const Vec10 u = l * ah;
      const Mat10 cond_cov = l * llt.solve(l.transpose());
      Mat10X k_mat;  // Sigma Z' V^-1 X
      if (spec.reml) {
        k_mat = l * llt.solve(l.transpose() * wz.asDiagonal() * st.ztx);
        acc.sigma_sum.noalias() += k_mat * info_inv * k_mat.transpose();
      }
      acc.sigma_sum.noalias() += u * u.transpose() + cond_cov;

      for (int k = 0; k < kNumFactors; ++k) {
        if (st.n[k] == 0.0) continue;
        const int zi = k, zs = kNumFactors + k;
        const Eigen::Vector2d uk(u[zi], u[zs]);
        const Eigen::Vector2d zr(ztr[zi], ztr[zs]);
        Eigen::Matrix2d zz;
        zz << st.ztz(zi, zi), st.ztz(zi, zs), st.ztz(zs, zi), st.ztz(zs, zs);
        Eigen::Matrix2d ck;
        ck << cond_cov(zi, zi), cond_cov(zi, zs), cond_cov(zs, zi), cond_cov(zs, zs);
        double e2 = rtr[k] - 2.0 * uk.dot(zr) + uk.dot(zz * uk) + (zz * ck).trace();
        if (spec.reml) {
          // tr(H D_k' D_k) with D = R V^-1 X = X - Z K.
          Eigen::Matrix<double, 2, Eigen::Dynamic> zx(2, p), kk(2, p);
          zx.row(0) = st.ztx.row(zi);
          zx.row(1) = st.ztx.row(zs);
          kk.row(0) = k_mat.row(zi);
          kk.row(1) = k_mat.row(zs);
          double tr = 0.0;
          for (int a : x_cols[static_cast<std::size_t>(k)])
            for (int b : x_cols[static_cast<std::size_t>(k)]) tr += info_inv(a, b) * st.xtx(b, a);
          const Eigen::Matrix<double, 2, Eigen::Dynamic> kh = kk * info_inv;
          tr -= 2.0 * (kh * zx.transpose()).trace();
          tr += (zz * kh * kk.transpose()).trace();
          e2 += tr;
        }
        acc.resid_sum[k] += e2;
      }
    });
    Step out;
    out.sigma = sigma;
    out.sigma2 = sigma2;
    out.ll = em.loglik;
    if (spec.reml) out.ll += -0.5 * xtvx_ldlt.vectorD().array().log().sum() + 0.5 * p * kLog2Pi;
    out.beta = std::move(beta);
    out.info_inv = std::move(info_inv);
    out.next_sigma = em.sigma_sum / static_cast<double>(stats.size());
    out.next_sigma = 0.5 * (out.next_sigma + out.next_sigma.transpose());
    for (int k = 0; k < kNumFactors; ++k)
      out.next_sigma2[k] = std::max(em.resid_sum[k] / n_obs[k], floor_var[k]);
    return out;
  };
  auto admissible = [&](const Mat10& s, const Vec5& s2) {
    if (!s.allFinite() || !s2.allFinite() || (s2 - floor_var).minCoeff() < 0.0) return false;
    Eigen::SelfAdjointEigenSolver<Mat10> es(s, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= 0.0;
  };

  int evaluations = 0;
  auto log_step = [&](const Step& st) {
    fit.loglik_trace.push_back(st.ll);
    fit.log_likelihood = st.ll;
    fit.sigma = st.sigma;
    fit.sigma_e = st.sigma2.cwiseSqrt();
    fit.beta_cov = st.info_inv;
    beta = st.beta;
    fit.n_iterations = static_cast<int>(fit.loglik_trace.size());
  };
  auto converged = [&](double prev, double cur) {
    return std::abs(cur - prev) < spec.convergence_tol * std::max(1.0, std::abs(prev));
  };

  Step cur = evaluate(sigma, sigma2);
  ++evaluations;
  log_step(cur);
  while (evaluations < spec.max_iter && !fit.converged) {
    Step s1 = evaluate(cur.next_sigma, cur.next_sigma2);
    ++evaluations;
    log_step(s1);
    if (converged(cur.ll, s1.ll)) {
      fit.converged = true;
      break;
    }
    if (!spec.accelerate || evaluations >= spec.max_iter) {
      cur = std::move(s1);
      continue;
    }
    // Squared extrapolation over two EM maps, backtracking toward the plain
    // EM point until the log-likelihood does not decrease.
    const Mat10 rs = s1.sigma - cur.sigma, vs = s1.next_sigma - 2.0 * s1.sigma + cur.sigma;
    const Vec5 re = s1.sigma2 - cur.sigma2, ve = s1.next_sigma2 - 2.0 * s1.sigma2 + cur.sigma2;
    const double rn = std::sqrt(rs.squaredNorm() + re.squaredNorm());
    const double vn = std::sqrt(vs.squaredNorm() + ve.squaredNorm());
    double alpha = vn > 0.0 ? std::min(-1.0, -rn / vn) : -1.0;
    std::optional<Step> next;
    while (!next && evaluations < spec.max_iter) {
      if (alpha > -1.01) alpha = -1.0;
      Mat10 sx = cur.sigma - 2.0 * alpha * rs + alpha * alpha * vs;
      Vec5 ex = cur.sigma2 - 2.0 * alpha * re + alpha * alpha * ve;
      if (alpha == -1.0) {
        sx = s1.next_sigma;
        ex = s1.next_sigma2;
      }
      sx = 0.5 * (sx + sx.transpose());
      if (alpha == -1.0 || admissible(sx, ex)) {
        try {
          Step cand = evaluate(sx, ex);
          ++evaluations;
          if (alpha == -1.0 || cand.ll >= s1.ll) next = std::move(cand);
        } catch (const NumericError&) {
          if (alpha == -1.0) throw;
          ++evaluations;
        }
      }
      alpha = 0.5 * (alpha - 1.0);
    }
    if (!next) break;
    const double prev_ll = s1.ll;
    log_step(*next);
    if (converged(prev_ll, next->ll)) fit.converged = true;
    cur = std::move(*next);
  }

  fit.beta = Eigen::VectorXd::Zero(kNumFixedEffects);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(kNumFixedEffects, kNumFixedEffects);
  for (int a = 0; a < p; ++a) {
    fit.beta[active[static_cast<std::size_t>(a)]] = beta[a];
    for (int c = 0; c < p; ++c)
      cov(active[static_cast<std::size_t>(a)], active[static_cast<std::size_t>(c)]) = fit.beta_cov(a, c);
  }
  fit.beta_cov = cov;
  return fit;
}

std::span<const Measurement> past_history(const LongitudinalRecord& r, double cutoff) {
  auto it = std::upper_bound(r.measurements.begin(), r.measurements.end(), cutoff,
                             [](double c, const Measurement& m) { return c < m.age; });
  return {r.measurements.data(), static_cast<std::size_t>(it - r.measurements.begin())};
}

Eigen::VectorXd predict_random_effects(const LmemFit& fit, std::span<const Measurement> history) {
  const auto n = static_cast<Eigen::Index>(history.size());
  if (n == 0) return Eigen::VectorXd::Zero(kNumRandomEffects);
  Eigen::MatrixXd x(n, kNumFixedEffects), z(n, kNumRandomEffects);
  Eigen::VectorXd y(n), resid_var(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& m = history[static_cast<std::size_t>(j)];
    design_row(m, fit.age_center, x.row(j), z.row(j));
    y[j] = m.value;
    const double sd = fit.sigma_e[static_cast<int>(m.factor)];
    resid_var[j] = sd * sd;
  }
  Eigen::MatrixXd sz = fit.sigma * z.transpose();
  Eigen::MatrixXd v = z * sz;
  v.diagonal() += resid_var;
  Eigen::VectorXd r = y - x * fit.beta;

  Eigen::VectorXd vr;
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (resid_var.minCoeff() > 0.0) llt.compute(v);
  if (resid_var.minCoeff() > 0.0 && llt.info() == Eigen::Success)
    vr = llt.solve(r);
  else
    vr = v.completeOrthogonalDecomposition().solve(r);
  return sz * vr;
}

BlupVector blup(const LmemFit& fit, std::span<const Measurement> history, double query_age,
                double history_cutoff) {
  BlupVector out;
  out.query_age = query_age;
  out.history_cutoff = history_cutoff;
  for (const auto& m : history) {
    if (m.age > history_cutoff) throw DataError("BLUP history contains a measurement after the cutoff");
    ++out.n_past_obs[static_cast<int>(m.factor)];
  }
  const Eigen::VectorXd u = predict_random_effects(fit, history);
  const bool bpm = !history.empty() && history.back().bpm;
  const bool statin = !history.empty() && history.back().statin;
  const double t = query_age - fit.age_center;
  for (Factor f : kAllFactors) {
    const int k = static_cast<int>(f);
    double v = fit.beta[intercept_index(f)] + fit.beta[slope_index(f)] * t + u[k] +
               u[kNumFactors + k] * t;
    const int tix = treatment_index(f);
    if (tix >= 0 && ((f == Factor::sbp && bpm) || (f == Factor::tchol && statin))) v += fit.beta[tix];
    out.values[k] = v;
  }
  return out;
}

}  // namespace cvdsched
