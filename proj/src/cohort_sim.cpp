#include "cvdsched/cohort_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

namespace cvdsched {

namespace {

using Vec10 = Eigen::Matrix<double, 2 * kNumFactors, 1>;
using Mat10 = Eigen::Matrix<double, 2 * kNumFactors, 2 * kNumFactors>;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::mt19937_64 person_stream(std::uint64_t seed, std::int64_t person_id) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(person_id)));
}

// Returns L with L L^T = sigma for a PSD sigma.
Mat10 psd_factor(const Mat10& sigma) {
  Eigen::SelfAdjointEigenSolver<Mat10> es(sigma);
  Vec10 ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

// First age >= from at which a + b * (age - center) exceeds threshold.
std::optional<double> threshold_crossing(double a, double b, double center, double from,
                                         double threshold) {
  double at_from = a + b * (from - center);
  if (at_from > threshold) return from;
  if (b <= 0.0) return std::nullopt;
  return center + (threshold - a) / b;
}

}  // namespace

void PiecewiseHazard::validate() const {
  if (knots.empty() || knots.size() != rates.size())
    throw ConfigError("piecewise hazard needs matching non-empty knots and rates");
  for (std::size_t j = 0; j < knots.size(); ++j) {
    if (!std::isfinite(rates[j]) || rates[j] < 0.0) throw ConfigError("hazard rates must be >= 0");
    if (j > 0 && knots[j] <= knots[j - 1]) throw ConfigError("hazard knots must increase");
  }
}

double PiecewiseHazard::rate_at(double age) const {
  auto it = std::upper_bound(knots.begin(), knots.end(), age);
  if (it == knots.begin()) return rates.front();
  return rates[static_cast<std::size_t>(it - knots.begin()) - 1];
}

double PiecewiseHazard::cumulative(double from, double to) const {
  if (to <= from) return 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < knots.size(); ++j) {
    double lo = j == 0 ? -std::numeric_limits<double>::infinity() : knots[j];
    double hi = j + 1 < knots.size() ? knots[j + 1] : std::numeric_limits<double>::infinity();
    double a = std::max(lo, from), b = std::min(hi, to);
    if (b > a) total += rates[j] * (b - a);
  }
  return total;
}

std::optional<double> PiecewiseHazard::inverse(double from, double target, double multiplier) const {
  if (target <= 0.0) return from;
  double acc = 0.0;
  double t = from;
  for (std::size_t j = 0; j < knots.size(); ++j) {
    double hi = j + 1 < knots.size() ? knots[j + 1] : std::numeric_limits<double>::infinity();
    if (hi <= t) continue;
    double rate = rates[j] * multiplier;
    double piece = rate * (hi - t);
    if (rate > 0.0 && acc + piece >= target) return t + (target - acc) / rate;
    acc += piece;
    t = hi;
  }
  return std::nullopt;
}

void SimConfig::validate() const {
  if (n_persons < 0) throw ConfigError("n_persons must be >= 0");
  if (n_practices < 1) throw ConfigError("n_practices must be >= 1");
  if (!(entry_age_min <= entry_age_max) || entry_age_min < 0.0)
    throw ConfigError("entry age range is invalid");
  if (!(max_age > entry_age_min)) throw ConfigError("max_age must exceed the entry ages");
  if (!(admin_years > 0.0)) throw ConfigError("admin_years must be > 0");
  if (male_fraction < 0.0 || male_fraction > 1.0) throw ConfigError("male_fraction must be in [0,1]");
  if (visit_rate < 0.0 || censor_rate < 0.0 || death_rate < 0.0 || bpm_start_rate < 0.0 ||
      statin_start_rate < 0.0)
    throw ConfigError("rates must be >= 0");
  for (int k = 0; k < kNumFactors; ++k) {
    if (missing_prob[k] < 0.0 || missing_prob[k] > 1.0)
      throw ConfigError("missing_prob must lie in [0,1]");
    if (!(trajectory.sigma_e[k] >= 0.0)) throw ConfigError("sigma_e must be >= 0");
  }
  for (double p : {prevalence.diabetes, prevalence.renal_disease, prevalence.depression,
                   prevalence.migraine, prevalence.severe_mental_illness,
                   prevalence.rheumatoid_arthritis, prevalence.atrial_fibrillation})
    if (p < 0.0 || p > 1.0) throw ConfigError("prevalences must lie in [0,1]");
  baseline_hazard.validate();

  const auto& s = trajectory.sigma;
  if (!s.allFinite()) throw ConfigError("sigma must be finite");
  double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ConfigError("sigma must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat10> es(s, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10 * scale)
    throw ConfigError("sigma must be positive semi-definite");
}

double latent_factor(const TrajectoryTruth& truth, const Vec10& u, Factor f, double age, bool bpm,
                     bool statin) {
  const int k = static_cast<int>(f);
  double dt = age - truth.age_center;
  double v = truth.intercept[k] + truth.slope[k] * dt + u[k] + u[kNumFactors + k] * dt;
  if (f == Factor::sbp && bpm) v += truth.bpm_effect;
  if (f == Factor::tchol && statin) v += truth.statin_effect;
  return v;
}

SimulatedCohort simulate_cohort_with_truth(const SimConfig& config) {
  config.validate();
  const auto n = static_cast<std::size_t>(config.n_persons);
  SimulatedCohort out;
  out.records.resize(n);
  out.truth.resize(n);
  const Mat10 factor = psd_factor(config.trajectory.sigma);
  const auto& tr = config.trajectory;
  const auto& cx = config.cox;

#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < config.n_persons; ++i) {
    auto rng = person_stream(config.seed, i);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> norm(0.0, 1.0);
    std::exponential_distribution<double> exp1(1.0);
    auto bern = [&](double p) { return unif(rng) < p; };
    auto exp_time = [&](double rate) {
      return rate > 0.0 ? exp1(rng) / rate : std::numeric_limits<double>::infinity();
    };

    LongitudinalRecord rec;
    rec.person_id = i;
    rec.practice_id = std::uniform_int_distribution<int>(0, config.n_practices - 1)(rng);
    rec.sex = bern(config.male_fraction) ? Sex::male : Sex::female;
    rec.entry_age = config.entry_age_min + (config.entry_age_max - config.entry_age_min) * unif(rng);

    const auto& pv = config.prevalence;
    rec.fixed.diabetes = bern(pv.diabetes);
    rec.fixed.renal_disease = bern(pv.renal_disease);
    rec.fixed.depression = bern(pv.depression);
    rec.fixed.migraine = bern(pv.migraine);
    rec.fixed.severe_mental_illness = bern(pv.severe_mental_illness);
    rec.fixed.rheumatoid_arthritis = bern(pv.rheumatoid_arthritis);
    rec.fixed.atrial_fibrillation = bern(pv.atrial_fibrillation);
    rec.fixed.townsend = std::uniform_int_distribution<int>(1, 20)(rng);

    Vec10 z;
    for (int k = 0; k < 2 * kNumFactors; ++k) z[k] = norm(rng);
    const Vec10 u = factor * z;

    // Treatment starts follow threshold rules on the untreated latent line.
    auto start_age = [&](Factor f, const std::optional<double>& thr) -> std::optional<double> {
      if (!thr) return std::nullopt;
      const int k = static_cast<int>(f);
      return threshold_crossing(tr.intercept[k] + u[k], tr.slope[k] + u[kNumFactors + k],
                                tr.age_center, rec.entry_age, *thr);
    };
    auto earliest = [](std::optional<double> a, double b) -> std::optional<double> {
      if (!std::isfinite(b)) return a;
      return a ? std::min(*a, b) : b;
    };
    std::optional<double> bpm_start = start_age(Factor::sbp, config.bpm_threshold);
    std::optional<double> statin_start = start_age(Factor::tchol, config.statin_threshold);
    if (config.bpm_start_rate > 0.0)
      bpm_start = earliest(bpm_start, rec.entry_age + exp_time(config.bpm_start_rate));
    if (config.statin_start_rate > 0.0)
      statin_start = earliest(statin_start, rec.entry_age + exp_time(config.statin_start_rate));
    const bool bpm_at_entry = bpm_start && *bpm_start <= rec.entry_age;
    const bool statin_at_entry = statin_start && *statin_start <= rec.entry_age;

    double lp = 0.0;
    for (Factor f : kAllFactors)
      lp += cx.factors[static_cast<int>(f)] *
            latent_factor(tr, u, f, rec.entry_age, bpm_at_entry, statin_at_entry);
    const auto& fx = rec.fixed;
    lp += cx.bpm * bpm_at_entry + cx.diabetes * fx.diabetes + cx.renal_disease * fx.renal_disease +
          cx.depression * fx.depression + cx.migraine * fx.migraine +
          cx.severe_mental_illness * fx.severe_mental_illness +
          cx.rheumatoid_arthritis * fx.rheumatoid_arthritis +
          cx.atrial_fibrillation * fx.atrial_fibrillation + cx.townsend * (fx.townsend - 1) +
          cx.male * (rec.sex == Sex::male);

    std::optional<double> event =
        config.baseline_hazard.inverse(rec.entry_age, exp1(rng), std::exp(lp));
    double dropout = rec.entry_age + exp_time(config.censor_rate);
    double death = rec.entry_age + exp_time(config.death_rate);
    double admin = std::min(rec.entry_age + config.admin_years, config.max_age);

    double exit = std::min({admin, dropout, death});
    if (event && *event <= exit) {
      exit = *event;
      rec.event_age = *event;
    } else if (death <= std::min(admin, dropout)) {
      rec.death_age = death;
    }
    rec.exit_age = exit;
    if (bpm_start && *bpm_start <= exit) rec.bpm_start_age = bpm_start;
    if (statin_start && *statin_start <= exit) rec.statin_start_age = statin_start;

    if (config.visit_rate > 0.0) {
      double age = rec.entry_age + exp_time(config.visit_rate);
      while (age <= exit) {
        const bool on_bpm = rec.bpm_start_age && *rec.bpm_start_age <= age;
        const bool on_statin = rec.statin_start_age && *rec.statin_start_age <= age;
        for (Factor f : kAllFactors) {
          const int k = static_cast<int>(f);
          if (bern(config.missing_prob[k])) continue;
          double v = latent_factor(tr, u, f, age, on_bpm, on_statin) + tr.sigma_e[k] * norm(rng);
          rec.measurements.push_back({age, f, v, on_bpm, on_statin});
        }
        age += exp_time(config.visit_rate);
      }
    }

    auto& truth = out.truth[static_cast<std::size_t>(i)];
    truth.person_id = i;
    truth.random_effects = u;
    truth.linear_predictor = lp;
    truth.uncensored_event_age = event;
    out.records[static_cast<std::size_t>(i)] = std::move(rec);
  }
  return out;
}

Cohort simulate_cohort(const SimConfig& config) {
  return simulate_cohort_with_truth(config).records;
}

PracticeSplit split_practices(const Cohort& cohort, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("split fraction must lie strictly between 0 and 1");
  std::set<int> ids;
  for (const auto& r : cohort) ids.insert(r.practice_id);
  if (ids.size() < 2) throw DataError("practice split needs at least 2 practices");

  std::vector<int> practices(ids.begin(), ids.end());
  std::mt19937_64 rng(splitmix64(seed));
  std::shuffle(practices.begin(), practices.end(), rng);
  auto n_deriv = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(practices.size()) + 1e-9));
  n_deriv = std::clamp<std::size_t>(n_deriv, 1, practices.size() - 1);

  PracticeSplit split;
  split.derivation_practices.assign(practices.begin(), practices.begin() + static_cast<std::ptrdiff_t>(n_deriv));
  split.validation_practices.assign(practices.begin() + static_cast<std::ptrdiff_t>(n_deriv), practices.end());
  std::sort(split.derivation_practices.begin(), split.derivation_practices.end());
  std::sort(split.validation_practices.begin(), split.validation_practices.end());
  std::set<int> deriv(split.derivation_practices.begin(), split.derivation_practices.end());
  for (const auto& r : cohort)
    (deriv.count(r.practice_id) ? split.derivation : split.validation).push_back(r);
  return split;
}

}  // namespace cvdsched
