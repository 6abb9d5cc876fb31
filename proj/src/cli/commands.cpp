#include "cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "cvdsched/validation.hpp"

#ifndef CVDSCHED_VERSION
#define CVDSCHED_VERSION "unknown"
#endif

namespace cvdsched::cli {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void warn(const std::string& msg) { std::cerr << "cvdsched: warning: " << msg << '\n'; }

// Timings live only in the *_summary.json files; every other output is a
// pure function of the inputs.
void write_summary(const RunConfig& c, const std::string& command, json body, Clock::time_point t0) {
  body["command"] = command;
  body["version"] = CVDSCHED_VERSION;
  body["threads"] = c.threads;
  body["seconds"] = seconds_since(t0);
  write_json(body, c.out_dir / (command + "_summary.json"));
}

std::string group_name(Sex sex, int la) { return std::string(sex_name(sex)) + "/" + std::to_string(la); }

Cohort filter_sex(const Cohort& cohort, Sex sex) {
  Cohort out;
  for (const auto& r : cohort)
    if (r.sex == sex) out.push_back(r);
  return out;
}

fs::path input_cohort(const RunConfig& c, const fs::path& fallback) {
  return c.cohort_dir ? *c.cohort_dir : fallback;
}

const std::set<std::string> kConfigKeys{"simulation", "out_dir", "cohort_dir", "split",    "sex",
                                        "landmarks",  "lmem",    "townsend",   "allow_nonconverged",
                                        "nb_params",  "f_set",   "sweep",      "threads",  "seed"};

json townsend_json(TownsendMode m) { return m == TownsendMode::numeric ? "numeric" : "dummies"; }

}  // namespace

void RunConfig::validate() const {
  simulation.validate();
  lmem.validate();
  nb_params.validate();
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (split && !(split->fraction > 0.0 && split->fraction < 1.0))
    throw ConfigError("split fraction must lie strictly between 0 and 1");
  if (sexes.empty()) throw ConfigError("no sex selected");
  if (landmarks.empty()) throw ConfigError("no landmark ages selected");
  for (int la : landmarks) static_cast<void>(LandmarkAge{la});
  if (f_set.empty()) throw ConfigError("f_set is empty");
  for (int f : f_set)
    if (f < 1 || f > 10) throw ConfigError("f_set entries must lie in 1..10");
}

std::vector<int> parse_landmarks(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(item, &pos);
    } catch (const std::exception&) {
      throw ConfigError("bad landmark age '" + item + "'");
    }
    if (pos != item.size()) throw ConfigError("bad landmark age '" + item + "'");
    static_cast<void>(LandmarkAge{v});
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty landmark list");
  return out;
}

std::vector<Sex> parse_sex_filter(const std::string& value) {
  if (value == "both") return {Sex::female, Sex::male};
  try {
    return {parse_sex(value)};
  } catch (const DataError&) {
    throw ConfigError("sex must be M, F or both");
  }
}

std::vector<SweepGrid> parse_sweep_grids(const json& j) {
  if (!j.is_array()) throw ConfigError("sweep grids must be a JSON array");
  std::vector<SweepGrid> grids;
  for (const auto& g : j) {
    SweepGrid grid;
    grid.parameter = g.at("parameter").get<std::string>();
    grid.values = g.at("values").get<std::vector<double>>();
    if (grid.values.empty()) throw ConfigError("sweep grid for '" + grid.parameter + "' has no values");
    for (double v : grid.values) with_parameter(NbParams{}, grid.parameter, v);
    grids.push_back(std::move(grid));
  }
  return grids;
}

RunConfig load_run_config(const std::optional<fs::path>& path) {
  RunConfig c;
  if (!path) return c;
  const json j = read_json(*path);
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items())
      if (!kConfigKeys.count(key)) throw ConfigError("unknown run config key '" + key + "'");
    if (j.contains("simulation")) c.simulation = j.at("simulation").get<SimConfig>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("cohort_dir")) c.cohort_dir = fs::path(j.at("cohort_dir").get<std::string>());
    if (j.contains("split")) {
      if (j.at("split").is_null()) {
        c.split.reset();
      } else {
        SplitOptions s;
        s.fraction = j.at("split").value("fraction", s.fraction);
        s.seed = j.at("split").value("seed", s.seed);
        c.split = s;
      }
    }
    if (j.contains("sex")) c.sexes = parse_sex_filter(j.at("sex").get<std::string>());
    if (j.contains("landmarks")) c.landmarks = j.at("landmarks").get<std::vector<int>>();
    if (j.contains("lmem")) c.lmem = j.at("lmem").get<LmemSpec>();
    if (j.contains("townsend")) {
      const auto t = j.at("townsend").get<std::string>();
      if (t != "numeric" && t != "dummies") throw ConfigError("townsend must be 'numeric' or 'dummies'");
      c.townsend = t == "numeric" ? TownsendMode::numeric : TownsendMode::dummies;
    }
    if (j.contains("allow_nonconverged")) c.allow_nonconverged = j.at("allow_nonconverged").get<bool>();
    if (j.contains("nb_params")) c.nb_params = j.at("nb_params").get<NbParams>();
    if (j.contains("f_set")) c.f_set = j.at("f_set").get<std::vector<int>>();
    if (j.contains("sweep")) c.sweep = parse_sweep_grids(j.at("sweep"));
    if (j.contains("threads")) c.threads = j.at("threads").get<int>();
    if (j.contains("seed")) {
      const auto seed = j.at("seed").get<std::uint64_t>();
      c.simulation.seed = seed;
      if (c.split) c.split->seed = seed;
    }
  } catch (const json::exception& e) {
    throw ConfigError(path->string() + ": " + e.what());
  }
  return c;
}

fs::path derivation_dir(const RunConfig& c) { return c.out_dir / "split" / "derivation"; }
fs::path validation_dir(const RunConfig& c) { return c.out_dir / "split" / "validation"; }
fs::path model_dir(const RunConfig& c, Sex sex, int la) {
  return c.out_dir / "models" / std::string(sex_name(sex)) / ("la" + std::to_string(la));
}

// ---------------------------------------------------------------------------

void cmd_simulate(const RunConfig& c) {
  const auto t0 = Clock::now();
  const SimulatedCohort sim = simulate_cohort_with_truth(c.simulation);
  write_cohort(sim.records, c.out_dir);
  json persons = json::array();
  for (const auto& t : sim.truth) {
    json p{{"person_id", t.person_id},
           {"random_effects", std::vector<double>(t.random_effects.data(), t.random_effects.data() + t.random_effects.size())},
           {"linear_predictor", t.linear_predictor},
           {"uncensored_event_age", t.uncensored_event_age ? json(*t.uncensored_event_age) : json(nullptr)}};
    persons.push_back(std::move(p));
  }
  write_json(json{{"config", c.simulation}, {"persons", std::move(persons)}}, c.out_dir / "truth.json");
  std::cerr << "cvdsched: simulated " << sim.records.size() << " persons in " << seconds_since(t0) << " s\n";
}

void cmd_fit(const RunConfig& c) {
  const auto t0 = Clock::now();
  Cohort derivation;
  json split_info = nullptr;
  const fs::path source = input_cohort(c, c.out_dir);
  if (c.split) {
    PracticeSplit split = split_practices(read_cohort(source), c.split->fraction, c.split->seed);
    write_cohort(split.derivation, derivation_dir(c));
    write_cohort(split.validation, validation_dir(c));
    split_info = {{"fraction", c.split->fraction},
                  {"seed", c.split->seed},
                  {"derivation_practices", split.derivation_practices},
                  {"validation_practices", split.validation_practices},
                  {"derivation_persons", split.derivation.size()},
                  {"validation_persons", split.validation.size()}};
    derivation = std::move(split.derivation);
  } else {
    derivation = read_cohort(source);
  }

  LandmarkOptions options;
  options.lmem = c.lmem;
  options.townsend = c.townsend;
  struct Job {
    Sex sex;
    int la;
    json entry;
    double seconds = 0.0;
    std::exception_ptr error;
  };
  std::map<Sex, Cohort> by_sex;
  std::vector<Job> jobs;
  for (Sex sex : c.sexes) {
    by_sex[sex] = filter_sex(derivation, sex);
    for (int la : c.landmarks) jobs.push_back({sex, la, json{{"sex", sex_name(sex)}, {"la", la}}, 0.0, nullptr});
  }

#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(jobs.size()); ++j) {
    Job& job = jobs[static_cast<std::size_t>(j)];
    const auto tj = Clock::now();
    const std::string group = group_name(job.sex, job.la);
    const Cohort& cohort = by_sex.at(job.sex);
    try {
      LandmarkModels models = fit_landmark_models(view_of(cohort), LandmarkAge{job.la}, options);
      if (!models.lmem_fit.converged && !c.allow_nonconverged)
        throw NumericError("mixed model for " + group + " did not converge in " +
                           std::to_string(models.lmem_fit.n_iterations) + " iterations");
      const fs::path dir = model_dir(c, job.sex, job.la);
      write_landmark_bundle(models, dir);

      // Smoking is modelled as Gaussian; report how often its BLUP leaves [0, 1].
      const CohortView lc = build_landmark_cohort(view_of(cohort), job.la);
      std::size_t outside = 0;
      for (const auto* p : lc) {
        const double v = blup(models.lmem_fit, past_history(*p, job.la), job.la, job.la)[Factor::smoke];
        outside += v < 0.0 || v > 1.0;
      }
      int n_5y = 0;
      for (const auto& f : models.cox_5y) n_5y += f.has_value();
      json& entry = job.entry;
      entry["dir"] = fs::relative(dir, c.out_dir).generic_string();
      entry["landmark_cohort_size"] = models.landmark_cohort_size;
      entry["lmem_converged"] = models.lmem_fit.converged;
      entry["lmem_iterations"] = models.lmem_fit.n_iterations;
      entry["cox_10y_events"] = models.cox_10y.n_events;
      entry["cox_5y_fitted"] = n_5y;
      entry["smoke_blup_outside_unit_interval"] =
          lc.empty() ? 0.0 : static_cast<double>(outside) / static_cast<double>(lc.size());
    } catch (const DataError& e) {
      job.entry["skipped"] = e.what();
    } catch (...) {
      job.error = std::current_exception();
    }
    job.seconds = seconds_since(tj);
  }

  json manifest = json::array();
  json timings = json::object();
  std::size_t fitted = 0;
  for (const Job& job : jobs) {
    if (job.error) std::rethrow_exception(job.error);
    if (job.entry.contains("skipped"))
      warn("skipping " + group_name(job.sex, job.la) + ": " + job.entry["skipped"].get<std::string>());
    else
      ++fitted;
    timings[group_name(job.sex, job.la)] = job.seconds;
    manifest.push_back(job.entry);
  }
  write_json(manifest, c.out_dir / "models" / "manifest.json");
  if (fitted == 0) throw DataError("no landmark model could be fitted");
  write_summary(c, "fit",
                json{{"split", split_info},
                     {"lmem", c.lmem},
                     {"townsend", townsend_json(c.townsend)},
                     {"fitted", fitted},
                     {"job_seconds", timings}},
                t0);
}

namespace {

struct GroupSchedule {
  Sex sex;
  int la;
  std::vector<RiskProfile> profiles;
  std::vector<std::optional<NbEvaluation>> evaluations;  // empty for very-high persons
};

std::optional<LandmarkModels> load_models(const RunConfig& c, Sex sex, int la) {
  const fs::path dir = model_dir(c, sex, la);
  if (!fs::exists(dir / "manifest.json")) {
    warn("no models for " + group_name(sex, la) + " in " + dir.string());
    return std::nullopt;
  }
  return read_landmark_bundle(dir);
}

GroupSchedule schedule_group(const RunConfig& c, const LandmarkModels& models, const CohortView& lc, Sex sex) {
  GroupSchedule g{sex, models.la, {}, {}};
  g.profiles.resize(lc.size());
  g.evaluations.resize(lc.size());
  const LandmarkAge la{models.la};
#pragma omp parallel for schedule(dynamic, 32)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(lc.size()); ++i) {
    const auto k = static_cast<std::size_t>(i);
    g.profiles[k] = risk_profile(models, *lc[k], la);
    if (g.profiles[k].risk_class != RiskClass::very_high)
      g.evaluations[k] = optimal_schedule(g.profiles[k], models, c.nb_params, c.f_set);
  }
  return g;
}

constexpr std::array<RiskClass, 5> kClassOrder{RiskClass::low, RiskClass::med_low, RiskClass::med_high,
                                               RiskClass::high, RiskClass::very_high};

}  // namespace

void cmd_schedule(const RunConfig& c) {
  const auto t0 = Clock::now();
  const Cohort cohort = read_cohort(input_cohort(c, derivation_dir(c)));
  const fs::path out = c.out_dir / "schedule";
  fs::create_directories(out);

  CsvWriter profiles(out / "risk_profiles.csv", {"person_id", "sex", "la", "s", "risk", "t_star", "class"});
  CsvWriter evals(out / "nb_evaluations.csv",
                  {"person_id", "sex", "la", "f", "k_star", "tau", "beyond_last_visit", "expected_visits", "efly_ns",
                   "efly_s", "qaly", "cost", "nb", "optimal"});
  CsvWriter table(out / "schedule_table.csv", {"sex", "la", "risk_class", "f", "count", "proportion"});
  CsvWriter overall(out / "schedule_proportions.csv", {"sex", "la", "f", "count", "proportion"});

  json groups = json::array();
  for (Sex sex : c.sexes) {
    const Cohort by_sex = filter_sex(cohort, sex);
    for (int la : c.landmarks) {
      const auto models = load_models(c, sex, la);
      if (!models) continue;
      if (!models->cox_5y[0]) {
        warn("skipping " + group_name(sex, la) + ": no five-year model at the landmark age");
        continue;
      }
      const CohortView lc = build_landmark_cohort(view_of(by_sex), la);
      const GroupSchedule g = schedule_group(c, *models, lc, sex);
      const std::string sx(sex_name(sex));

      std::map<RiskClass, std::map<int, std::size_t>> counts;
      std::map<RiskClass, std::size_t> class_total;
      std::map<int, std::size_t> f_total;
      std::size_t scheduled = 0, flagged = 0;
      for (std::size_t k = 0; k < lc.size(); ++k) {
        const auto& prof = g.profiles[k];
        const std::string cls(risk_class_name(prof.risk_class));
        for (int step = 0; step < kPredictionSteps; ++step) {
          profiles << static_cast<long long>(prof.person_id) << sx << la << la + step
                   << prof.risks[static_cast<std::size_t>(step)] << prof.t_star << cls;
          profiles.end_row();
        }
        ++class_total[prof.risk_class];
        const auto& ev = g.evaluations[k];
        if (!ev) continue;
        ++scheduled;
        ++counts[prof.risk_class][ev->f_opt];
        ++f_total[ev->f_opt];
        bool any_flag = false;
        for (const auto& row : ev->rows) {
          const auto& t = row.terms;
          any_flag |= t.beyond_last_visit;
          evals << static_cast<long long>(ev->person_id) << sx << la << t.f
                << (t.k_star ? std::to_string(*t.k_star) : std::string()) << t.tau << int(t.beyond_last_visit)
                << t.expected_visits << t.efly_ns << t.efly_s << row.qaly << row.cost << row.nb
                << int(t.f == ev->f_opt);
          evals.end_row();
        }
        flagged += any_flag;
      }

      for (RiskClass rc : kClassOrder) {
        const std::string cls(risk_class_name(rc));
        if (rc == RiskClass::very_high) {
          table << sx << la << cls << "excluded" << static_cast<unsigned long>(class_total[rc]) << "";
          table.end_row();
          continue;
        }
        for (int f : c.f_set) {
          const std::size_t n = counts[rc][f];
          table << sx << la << cls << f << static_cast<unsigned long>(n)
                << (class_total[rc] ? static_cast<double>(n) / static_cast<double>(class_total[rc]) : 0.0);
          table.end_row();
        }
      }
      for (int f : c.f_set) {
        overall << sx << la << f << static_cast<unsigned long>(f_total[f])
                << (scheduled ? static_cast<double>(f_total[f]) / static_cast<double>(scheduled) : 0.0);
        overall.end_row();
      }

      json classes = json::object();
      for (RiskClass rc : kClassOrder) classes[std::string(risk_class_name(rc))] = class_total[rc];
      groups.push_back(json{{"sex", sx},
                            {"la", la},
                            {"landmark_cohort", lc.size()},
                            {"scheduled", scheduled},
                            {"excluded_very_high", class_total[RiskClass::very_high]},
                            {"classes", classes},
                            {"crossing_beyond_last_visit", flagged}});
    }
  }
  if (groups.empty()) throw DataError("no group could be scheduled");
  write_summary(c, "schedule", json{{"nb_params", c.nb_params}, {"f_set", c.f_set}, {"groups", groups}}, t0);
}

void cmd_validate(const RunConfig& c) {
  const auto t0 = Clock::now();
  const Cohort cohort = read_cohort(input_cohort(c, validation_dir(c)));
  const fs::path out = c.out_dir / "validation";
  fs::create_directories(out);
  CsvWriter metrics(out / "metrics.csv", {"sex", "la", "s", "n", "events", "c_index", "c_index_se", "usable_pairs",
                                          "brier", "brier_constant", "constant_risk"});

  struct Cell {
    std::optional<Concordance> c;
    std::optional<double> brier, brier_const;
    std::size_t n = 0;
  };
  std::map<int, std::vector<Cell>> by_la;
  std::vector<Concordance> all;
  CsvWriter groups(out / "by_group.csv", {"sex", "la", "n", "c_index", "c_index_se", "usable_pairs"});
  for (Sex sex : c.sexes) {
    const Cohort by_sex = filter_sex(cohort, sex);
    for (int la : c.landmarks) {
      const auto models = load_models(c, sex, la);
      if (!models) continue;
      const CohortView lc = build_landmark_cohort(view_of(by_sex), la);
      std::vector<Concordance> group_parts;
      std::size_t group_n = 0;
      for (int step = 0; step < kPredictionSteps; ++step) {
        const auto& fit = models->cox_5y[static_cast<std::size_t>(step)];
        if (!fit) continue;
        const double s = la + step;
        const CohortView sub = build_subcohort(lc, la, s);
        if (sub.empty()) continue;
        PredictionSet preds(sub.size());
#pragma omp parallel for schedule(dynamic, 64)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(sub.size()); ++i) {
          const auto& p = *sub[static_cast<std::size_t>(i)];
          const BlupVector b = blup(models->lmem_fit, past_history(p, s), s, s);
          const Eigen::VectorXd x = covariate_vector(models->policy, b, p, s);
          const double end = s + kFiveYearWindow;
          preds[static_cast<std::size_t>(i)] = {p.person_id, s, kFiveYearWindow, risk_window(*fit, x, s, kFiveYearWindow),
                                                std::min(p.exit_age, end) - s, p.event_age && *p.event_age <= end};
        }
        Cell cell;
        cell.n = preds.size();
        std::size_t events = 0;
        for (const auto& r : preds) events += r.event;
        try {
          cell.c = dynamic_cindex(preds);
          all.push_back(*cell.c);
          group_parts.push_back(*cell.c);
        } catch (const DataError&) {
        }
        const double q = 1.0 - km_survival(preds, kFiveYearWindow);
        try {
          cell.brier = brier_score(preds);
          PredictionSet flat = preds;
          for (auto& r : flat) r.predicted_risk = q;
          cell.brier_const = brier_score(flat);
        } catch (const DataError& e) {
          warn(group_name(sex, la) + " s=" + std::to_string(static_cast<int>(s)) + ": " + e.what());
        }
        metrics << std::string(sex_name(sex)) << la << static_cast<int>(s) << static_cast<unsigned long>(cell.n)
                << static_cast<unsigned long>(events)
                << (cell.c ? std::optional<double>(cell.c->value) : std::nullopt)
                << (cell.c ? std::optional<double>(cell.c->se) : std::nullopt)
                << (cell.c ? cell.c->usable_pairs : 0.0) << cell.brier << cell.brier_const << q;
        metrics.end_row();
        group_n += cell.n;
        by_la[la].push_back(cell);
      }
      std::optional<Concordance> pooled;
      if (!group_parts.empty()) pooled = pooled_cindex(group_parts);
      groups << std::string(sex_name(sex)) << la << static_cast<unsigned long>(group_n)
             << (pooled ? std::optional<double>(pooled->value) : std::nullopt)
             << (pooled ? std::optional<double>(pooled->se) : std::nullopt)
             << (pooled ? pooled->usable_pairs : 0.0);
      groups.end_row();
    }
  }
  if (all.empty()) throw DataError("no validation cell had usable pairs");

  CsvWriter landmark(out / "by_landmark.csv",
                     {"la", "n", "c_index", "c_index_se", "brier", "brier_constant"});
  json per_la = json::array();
  for (const auto& [la, cells] : by_la) {
    std::vector<Concordance> cs;
    double bw = 0.0, b = 0.0, bc = 0.0;
    std::size_t n = 0;
    for (const auto& cell : cells) {
      n += cell.n;
      if (cell.c) cs.push_back(*cell.c);
      if (cell.brier && cell.brier_const) {
        bw += static_cast<double>(cell.n);
        b += static_cast<double>(cell.n) * *cell.brier;
        bc += static_cast<double>(cell.n) * *cell.brier_const;
      }
    }
    std::optional<Concordance> pooled;
    if (!cs.empty()) pooled = pooled_cindex(cs);
    std::optional<double> brier, brier_const;
    if (bw > 0.0) {
      brier = b / bw;
      brier_const = bc / bw;
    }
    landmark << la << static_cast<unsigned long>(n)
             << (pooled ? std::optional<double>(pooled->value) : std::nullopt)
             << (pooled ? std::optional<double>(pooled->se) : std::nullopt) << brier << brier_const;
    landmark.end_row();
    per_la.push_back(json{{"la", la},
                          {"c_index", pooled ? json(pooled->value) : json(nullptr)},
                          {"brier", brier ? json(*brier) : json(nullptr)},
                          {"brier_constant", brier_const ? json(*brier_const) : json(nullptr)}});
  }
  const Concordance overall = pooled_cindex(all);
  write_json(json{{"overall_c_index", overall.value}, {"overall_c_index_se", overall.se},
                  {"usable_pairs", overall.usable_pairs}, {"by_landmark", per_la}},
             out / "summary.json");
  write_summary(c, "validate", json{{"overall_c_index", overall.value}}, t0);
}

void cmd_sweep(const RunConfig& c) {
  const auto t0 = Clock::now();
  if (c.sweep.empty()) throw ConfigError("no sweep grids given (config 'sweep' or --grid)");
  const CsvTable tab = read_csv(c.out_dir / "schedule" / "nb_evaluations.csv");
  const std::size_t ci = tab.column("person_id"), cs = tab.column("sex"), cl = tab.column("la"),
                    cf = tab.column("f"), ck = tab.column("k_star"), ct = tab.column("tau"),
                    cb = tab.column("beyond_last_visit"), ce = tab.column("expected_visits"),
                    cn = tab.column("efly_ns"), cy = tab.column("efly_s");

  // Rows are grouped by person in file order.
  std::map<std::string, std::vector<NbCacheEntry>> groups;
  std::vector<std::string> order;
  for (const auto& row : tab.rows) {
    const std::string group = row[cs] + "/" + row[cl];
    auto& entries = groups[group];
    if (entries.empty()) order.push_back(group);
    const auto pid = static_cast<std::int64_t>(std::stoll(row[ci]));
    if (entries.empty() || entries.back().person_id != pid) entries.push_back(NbCacheEntry{pid, group, {}});
    NbTerms t;
    t.f = std::stoi(row[cf]);
    if (!row[ck].empty()) t.k_star = std::stoi(row[ck]);
    if (!row[ct].empty()) t.tau = parse_double(row[ct]);
    t.beyond_last_visit = row[cb] == "1";
    t.expected_visits = parse_double(row[ce]);
    t.efly_ns = parse_double(row[cn]);
    t.efly_s = parse_double(row[cy]);
    entries.back().terms.push_back(t);
  }

  const fs::path out = c.out_dir / "sweep";
  fs::create_directories(out);
  CsvWriter csv(out / "sweep.csv", {"sex", "la", "parameter", "value", "f", "count", "proportion", "n_changed"});
  for (const auto& group : order) {
    const auto slash = group.find('/');
    const std::string sex = group.substr(0, slash), la = group.substr(slash + 1);
    for (const auto& r : sensitivity_sweep(groups[group], c.nb_params, c.sweep, c.f_set)) {
      csv << sex << la << r.parameter << r.value << r.f << static_cast<unsigned long>(r.count) << r.proportion
          << static_cast<unsigned long>(r.n_changed);
      csv.end_row();
    }
  }
  json grids = json::array();
  for (const auto& g : c.sweep) grids.push_back(json{{"parameter", g.parameter}, {"values", g.values}});
  write_summary(c, "sweep", json{{"base", c.nb_params}, {"grids", grids}}, t0);
}

void cmd_report(const RunConfig& c) {
  const auto t0 = Clock::now();
  json report = json::object();
  for (const char* name : {"fit", "schedule", "validate", "sweep"}) {
    const fs::path p = c.out_dir / (std::string(name) + "_summary.json");
    if (fs::exists(p)) report[name] = read_json(p);
  }
  const fs::path vs = c.out_dir / "validation" / "summary.json";
  if (fs::exists(vs)) report["validation_metrics"] = read_json(vs);
  if (report.empty()) throw DataError("nothing to report in " + c.out_dir.string());
  write_json(report, c.out_dir / "report.json");

  std::ofstream txt(c.out_dir / "report.txt");
  if (!txt) throw DataError("cannot write report.txt");
  txt << "cvdsched " << CVDSCHED_VERSION << " run report\n";
  if (report.contains("fit")) {
    txt << "\nfitted landmark groups: " << report["fit"].value("fitted", 0) << '\n';
  }
  if (report.contains("schedule")) {
    txt << "\nschedule (derivation landmark cohorts)\n";
    for (const auto& g : report["schedule"]["groups"]) {
      txt << "  " << g["sex"].get<std::string>() << " la=" << g["la"].get<int>()
          << "  cohort=" << g["landmark_cohort"].get<std::size_t>()
          << "  scheduled=" << g["scheduled"].get<std::size_t>()
          << "  very_high_excluded=" << g["excluded_very_high"].get<std::size_t>() << '\n';
    }
  }
  if (report.contains("validation_metrics")) {
    const auto& v = report["validation_metrics"];
    txt << "\nvalidation: overall c-index " << format_double(v["overall_c_index"].get<double>()) << " (se "
        << format_double(v["overall_c_index_se"].get<double>()) << ")\n";
    for (const auto& row : v["by_landmark"]) {
      txt << "  la=" << row["la"].get<int>();
      if (!row["c_index"].is_null()) txt << "  c=" << format_double(row["c_index"].get<double>());
      if (!row["brier"].is_null())
        txt << "  brier=" << format_double(row["brier"].get<double>())
            << "  constant=" << format_double(row["brier_constant"].get<double>());
      txt << '\n';
    }
  }
  std::cerr << "cvdsched: report written in " << seconds_since(t0) << " s\n";
}

}  // namespace cvdsched::cli
