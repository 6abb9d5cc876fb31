#include "cvdsched/netbenefit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cvdsched {

namespace {
constexpr double kEps = 1e-9;
// NB values this close (relative) count as tied; EFLY splits at different
// tau round differently even when the totals agree.
constexpr double kTieTolerance = 1e-12;
}

void NbParams::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be > 0");
  if (!(u_s > 0.0 && u_s <= 1.0)) throw ConfigError("u_s must lie in (0, 1]");
  if (!(c_s >= 0.0) || !(c_v >= 0.0)) throw ConfigError("costs must be >= 0");
  StatinEffect{theta}.validate();
}

Schedule make_schedule(int f, double la) {
  if (f < 1 || f > 10) throw ConfigError("visit frequency must lie in 1..10 years");
  Schedule s;
  s.f = f;
  s.la = la;
  for (int k = 0; k * f <= 10; ++k) s.visits.push_back(la + k * f);
  return s;
}

StatinVisit statin_visit(const Schedule& schedule, std::optional<double> t_star) {
  StatinVisit out;
  if (!t_star) return out;
  for (std::size_t k = 0; k < schedule.visits.size(); ++k) {
    if (schedule.visits[k] >= *t_star - kEps) {
      out.k_star = static_cast<int>(k) + 1;
      out.tau = schedule.visits[k];
      return out;
    }
  }
  out.beyond_last_visit = true;
  return out;
}

double expected_visits(const Schedule& schedule, std::optional<int> k_star) {
  if (k_star) return *k_star;
  return 1.0 + 10.0 / schedule.f;
}

Efly efly(const CoxFit& cox_10y, const Eigen::Ref<const Eigen::VectorXd>& x, double la,
          std::optional<double> tau, double theta) {
  const double end = la + kTenYearWindow;
  if (std::abs(cox_10y.origin - la) > kEps || cox_10y.horizon < end - kEps)
    throw DataError("EFLY needs a ten-year fit anchored at the landmark age");
  if (tau && (*tau < la - kEps || *tau > end + kEps)) throw DataError("statin start outside the ten-year window");
  StatinEffect{theta}.validate();
  const double lp = linear_predictor(cox_10y, x);
  const double scale = std::exp(lp);
  const double start = tau ? std::clamp(*tau, la, end) : end;

  std::vector<double> cuts{la, start, end};
  for (Eigen::Index j = 0; j < cox_10y.knot_time.size(); ++j) {
    const double t = cox_10y.knot_time[j];
    if (t > la && t < end) cuts.push_back(t);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  const double cum_start = baseline_cumhaz(cox_10y, start);
  Efly out;
  for (std::size_t j = 0; j + 1 < cuts.size(); ++j) {
    const double a = cuts[j], b = cuts[j + 1];
    const double cum = baseline_cumhaz(cox_10y, a);
    if (a < start) {
      out.ns += std::exp(-cum * scale) * (b - a);
    } else {
      const double h = (cum_start + theta * (cum - cum_start)) * scale;
      out.s += std::exp(-h) * (b - a);
    }
  }
  return out;
}

std::vector<NbTerms> nb_terms(const RiskProfile& profile, const LandmarkModels& models, double theta,
                              std::span<const int> f_set) {
  std::vector<NbTerms> out;
  out.reserve(f_set.size());
  for (int f : f_set) {
    const Schedule sched = make_schedule(f, profile.la);
    const StatinVisit sv = statin_visit(sched, profile.t_star);
    NbTerms t;
    t.f = f;
    t.k_star = sv.k_star;
    t.tau = sv.tau;
    t.beyond_last_visit = sv.beyond_last_visit;
    t.expected_visits = expected_visits(sched, sv.k_star);
    const Efly e = efly(models.cox_10y, profile.x_landmark, profile.la, sv.tau, theta);
    t.efly_ns = e.ns;
    t.efly_s = e.s;
    out.push_back(t);
  }
  return out;
}

int argmax_frequency(const NbParams& params, std::span<const NbTerms> terms) {
  if (terms.empty()) throw ConfigError("no schedules to compare");
  int best_f = terms.front().f;
  double best = net_benefit(params, terms.front().efly_ns, terms.front().efly_s, terms.front().expected_visits);
  for (const auto& t : terms.subspan(1)) {
    const double nb = net_benefit(params, t.efly_ns, t.efly_s, t.expected_visits);
    const double tol = kTieTolerance * std::max(std::abs(nb), std::abs(best));
    if (nb > best + tol || (nb >= best - tol && t.f > best_f)) {
      best = nb;
      best_f = t.f;
    }
  }
  return best_f;
}

NbEvaluation optimal_schedule(const RiskProfile& profile, const LandmarkModels& models, const NbParams& params,
                              std::span<const int> f_set) {
  params.validate();
  if (profile.risk_class == RiskClass::very_high)
    throw DataError("already above threshold at landmark (person " + std::to_string(profile.person_id) + ")");
  NbEvaluation ev;
  ev.person_id = profile.person_id;
  ev.la = profile.la;
  const auto terms = nb_terms(profile, models, params.theta, f_set);
  for (const auto& t : terms) {
    NbRow row;
    row.terms = t;
    row.qaly = qaly(t.efly_ns, t.efly_s, params.u_s);
    row.cost = nb_cost(t.efly_s, t.expected_visits, params.c_s, params.c_v);
    row.nb = net_benefit(params, t.efly_ns, t.efly_s, t.expected_visits);
    ev.rows.push_back(row);
  }
  ev.f_opt = argmax_frequency(params, terms);
  return ev;
}

NbParams with_parameter(NbParams base, const std::string& parameter, double value) {
  if (parameter == "lambda") base.lambda = value;
  else if (parameter == "u_s") base.u_s = value;
  else if (parameter == "c_s") base.c_s = value;
  else if (parameter == "c_v") base.c_v = value;
  else throw ConfigError("unknown sweep parameter '" + parameter + "' (expected lambda, u_s, c_s, c_v)");
  base.validate();
  return base;
}

std::vector<SweepRow> sensitivity_sweep(std::span<const NbCacheEntry> cache, const NbParams& base,
                                        std::span<const SweepGrid> grids, std::span<const int> f_set) {
  base.validate();
  std::vector<int> base_opt;
  base_opt.reserve(cache.size());
  for (const auto& e : cache) base_opt.push_back(argmax_frequency(base, e.terms));

  std::vector<SweepRow> rows;
  for (const auto& grid : grids) {
    for (double v : grid.values) {
      const NbParams params = with_parameter(base, grid.parameter, v);
      std::vector<std::size_t> counts(f_set.size(), 0);
      std::size_t changed = 0;
      for (std::size_t i = 0; i < cache.size(); ++i) {
        const int f = argmax_frequency(params, cache[i].terms);
        changed += f != base_opt[i];
        auto it = std::find(f_set.begin(), f_set.end(), f);
        if (it != f_set.end()) ++counts[static_cast<std::size_t>(it - f_set.begin())];
      }
      for (std::size_t j = 0; j < f_set.size(); ++j) {
        SweepRow row;
        row.parameter = grid.parameter;
        row.value = v;
        row.f = f_set[j];
        row.count = counts[j];
        row.proportion = cache.empty() ? 0.0 : static_cast<double>(counts[j]) / static_cast<double>(cache.size());
        row.n_changed = changed;
        rows.push_back(row);
      }
    }
  }
  return rows;
}

}  // namespace cvdsched
