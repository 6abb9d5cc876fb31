#include "cvdsched/landmark.hpp"

#include <algorithm>

namespace cvdsched {

LandmarkAge::LandmarkAge(int years) : years_(years) {
  if (std::find(kLandmarkGrid.begin(), kLandmarkGrid.end(), years) == kLandmarkGrid.end())
    throw ConfigError("landmark age " + std::to_string(years) + " is not on the 40..80 grid");
}

std::string_view risk_class_name(RiskClass c) {
  switch (c) {
    case RiskClass::very_high: return "very_high";
    case RiskClass::high: return "high";
    case RiskClass::med_high: return "med_high";
    case RiskClass::med_low: return "med_low";
    case RiskClass::low: return "low";
  }
  return "?";
}

RiskClass classify_risk(double r) {
  if (r > 0.05) return RiskClass::very_high;
  if (r > 0.0375) return RiskClass::high;
  if (r > 0.025) return RiskClass::med_high;
  if (r > 0.0125) return RiskClass::med_low;
  return RiskClass::low;
}

std::vector<std::string> CovariatePolicy::names() const {
  std::vector<std::string> out;
  for (Factor f : kAllFactors) out.emplace_back(factor_name(f));
  out.insert(out.end(), {"bpm", "diabetes", "depression", "migraine", "severe_mental_illness"});
  if (late_conditions) out.insert(out.end(), {"renal_disease", "rheumatoid_arthritis", "atrial_fibrillation"});
  if (townsend == TownsendMode::numeric) {
    out.emplace_back("townsend");
  } else {
    for (int level = 2; level <= 20; ++level) out.push_back("townsend_" + std::to_string(level));
  }
  return out;
}

Eigen::VectorXd covariate_vector(const CovariatePolicy& policy, const BlupVector& blups,
                                 const LongitudinalRecord& person, double covariate_age) {
  std::vector<double> x;
  x.reserve(32);
  for (int k = 0; k < kNumFactors; ++k) x.push_back(blups.values[k]);
  const auto& fx = person.fixed;
  x.insert(x.end(), {person.on_bpm_at(covariate_age) ? 1.0 : 0.0, double(fx.diabetes), double(fx.depression),
                     double(fx.migraine), double(fx.severe_mental_illness)});
  if (policy.late_conditions)
    x.insert(x.end(), {double(fx.renal_disease), double(fx.rheumatoid_arthritis), double(fx.atrial_fibrillation)});
  if (policy.townsend == TownsendMode::numeric) {
    x.push_back(fx.townsend);
  } else {
    for (int level = 2; level <= 20; ++level) x.push_back(fx.townsend == level ? 1.0 : 0.0);
  }
  return Eigen::Map<Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

CohortView build_landmark_cohort(const CohortView& cohort, double la) {
  CohortView out;
  for (const auto* r : cohort) {
    if (!(r->entry_age <= la && la < r->exit_age)) continue;
    if (r->event_age && *r->event_age < la) continue;
    if (r->death_age && *r->death_age < la) continue;
    if (r->statin_start_age && *r->statin_start_age < la) continue;
    out.push_back(r);
  }
  return out;
}

CohortView build_subcohort(const CohortView& landmark_cohort, double la, double s) {
  (void)la;
  CohortView out;
  for (const auto* r : landmark_cohort) {
    if (!(r->exit_age > s)) continue;
    if (r->event_age && *r->event_age <= s) continue;
    out.push_back(r);
  }
  return out;
}

SurvivalData landmark_survival_data(const LmemFit& fit, const CovariatePolicy& policy,
                                    const CohortView& persons, double origin, double window) {
  SurvivalData data;
  data.names = policy.names();
  const auto n = static_cast<Eigen::Index>(persons.size());
  data.x.resize(n, static_cast<Eigen::Index>(data.names.size()));
  data.time.resize(n);
  data.event.assign(persons.size(), 0);
  data.person_id.resize(persons.size());
  const double horizon = origin + window;
#pragma omp parallel for schedule(dynamic, 64)
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = *persons[static_cast<std::size_t>(i)];
    const BlupVector b = blup(fit, past_history(r, origin), origin, origin);
    data.x.row(i) = covariate_vector(policy, b, r, origin).transpose();
    data.time[i] = std::min(r.exit_age, horizon) - origin;
    data.event[static_cast<std::size_t>(i)] = (r.event_age && *r.event_age <= horizon) ? 1 : 0;
    data.person_id[static_cast<std::size_t>(i)] = r.person_id;
  }
  return data;
}

std::vector<std::string> hold_separated_covariates(SurvivalData& data) {
  std::vector<std::string> held;
  int events = 0;
  for (char e : data.event) events += e;
  if (events == 0) return held;
  for (Eigen::Index c = 0; c < data.x.cols(); ++c) {
    const auto col = data.x.col(c);
    if (!(col.array() == 0.0 || col.array() == 1.0).all()) continue;
    const double ones = col.sum();
    if (ones == 0.0 || ones == static_cast<double>(col.size())) continue;
    double event_ones = 0.0;
    for (Eigen::Index i = 0; i < col.size(); ++i)
      if (data.event[static_cast<std::size_t>(i)]) event_ones += col[i];
    if (event_ones == 0.0 || event_ones == static_cast<double>(events)) {
      data.x.col(c).setZero();
      held.push_back(data.names[static_cast<std::size_t>(c)]);
    }
  }
  return held;
}

namespace {

CoxFit fit_landmark_cox(SurvivalData data, double origin, double horizon) {
  std::vector<std::string> held = hold_separated_covariates(data);
  CoxFit fit = fit_cox(data, origin, horizon);
  fit.held_at_zero = std::move(held);
  return fit;
}

}  // namespace

LandmarkModels fit_landmark_models(const CohortView& derivation_cohort, LandmarkAge la,
                                   const LandmarkOptions& options) {
  LandmarkModels models;
  models.la = la.value();
  models.policy = CovariatePolicy::for_landmark(la, options.townsend);
  const CohortView cohort = build_landmark_cohort(derivation_cohort, la.age());
  if (cohort.empty()) throw DataError("landmark cohort at age " + std::to_string(la.value()) + " is empty");
  models.landmark_cohort_size = static_cast<int>(cohort.size());

  // Stage 1 uses every measurement of the landmark cohort, past and future.
  LmemSpec spec = options.lmem;
  spec.age_center = la.age();
  models.lmem_fit = fit_lmem(cohort, spec);

  // Stage 2: past-only BLUPs feed the Cox fits.
  models.cox_10y =
      fit_landmark_cox(landmark_survival_data(models.lmem_fit, models.policy, cohort, la.age(), kTenYearWindow),
                       la.age(), la.age() + kTenYearWindow);

  for (int step = 0; step < kPredictionSteps; ++step) {
    const double s = la.prediction_time(step);
    const CohortView sub = build_subcohort(cohort, la.age(), s);
    models.subcohort_size[static_cast<std::size_t>(step)] = static_cast<int>(sub.size());
    auto& reason = models.unfittable_reason[static_cast<std::size_t>(step)];
    if (sub.empty()) {
      reason = "empty sub-cohort";
      continue;
    }
    try {
      models.cox_5y[static_cast<std::size_t>(step)] =
          fit_landmark_cox(landmark_survival_data(models.lmem_fit, models.policy, sub, s, kFiveYearWindow), s,
                           s + kFiveYearWindow);
    } catch (const DataError& e) {
      reason = e.what();
    } catch (const NumericError& e) {
      reason = e.what();
    }
  }
  return models;
}

std::optional<double> crossing_time(std::span<const std::optional<double>> risks, double la, double threshold) {
  std::optional<std::size_t> prev;
  for (std::size_t j = 0; j < risks.size(); ++j) {
    if (!risks[j]) continue;
    const double r = *risks[j];
    if (r > threshold) {
      if (!prev) return la + static_cast<double>(j);
      const double rp = *risks[*prev];
      const double span = static_cast<double>(j - *prev);
      return la + static_cast<double>(*prev) + span * (threshold - rp) / (r - rp);
    }
    prev = j;
  }
  return std::nullopt;
}

RiskProfile risk_profile(const LandmarkModels& models, const LongitudinalRecord& person, LandmarkAge la) {
  if (la.value() != models.la) throw ConfigError("risk profile requested at a different landmark age");
  RiskProfile prof;
  prof.person_id = person.person_id;
  prof.la = la.value();
  prof.history_cutoff = la.age();
  const auto history = past_history(person, la.age());

  for (int step = 0; step < kPredictionSteps; ++step) {
    const auto& fit = models.cox_5y[static_cast<std::size_t>(step)];
    if (!fit) continue;
    const double s = la.prediction_time(step);
    const BlupVector b = blup(models.lmem_fit, history, s, la.age());
    const Eigen::VectorXd x = covariate_vector(models.policy, b, person, la.age());
    prof.risks[static_cast<std::size_t>(step)] = risk_window(*fit, x, s, kFiveYearWindow);
  }
  if (!prof.risks[0]) throw DataError("no five-year model at landmark age " + std::to_string(la.value()));
  prof.risk_class = classify_risk(*prof.risks[0]);
  prof.t_star = crossing_time(prof.risks, la.age());
  prof.x_landmark = covariate_vector(models.policy, blup(models.lmem_fit, history, la.age(), la.age()), person, la.age());
  return prof;
}

}  // namespace cvdsched
