#include "cvdsched/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace cvdsched {

namespace fs = std::filesystem;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw DataError("cannot parse number '" + s + "'");
  return v;
}

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError("CSV column '" + name + "' missing");
  return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + " has no header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto row = split_line(line);
    if (row.size() != t.header.size())
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(t.header.size()) + " fields");
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header)
    : out_(path), columns_(header.size()) {
  if (!out_) throw DataError("cannot write " + path.string());
  for (const auto& h : header) *this << h;
  end_row();
}

CsvWriter& CsvWriter::operator<<(const std::string& field) {
  if (in_row_ > 0) out_ << ',';
  out_ << field;
  ++in_row_;
  return *this;
}

void CsvWriter::end_row() {
  if (in_row_ != columns_) throw std::logic_error("CSV row has the wrong number of fields");
  out_ << '\n';
  in_row_ = 0;
}

namespace {

const std::vector<std::string> kPersonColumns{
    "person_id", "practice_id", "sex", "entry_age", "exit_age", "event_age", "death_age", "statin_start_age",
    "bpm_start_age", "diabetes", "renal_disease", "depression", "migraine", "severe_mental_illness",
    "rheumatoid_arthritis", "atrial_fibrillation", "townsend"};
const std::vector<std::string> kMeasurementColumns{"person_id", "practice_id", "age", "factor", "value", "bpm",
                                                   "statin"};

std::optional<double> optional_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return parse_double(s);
}

bool flag(const std::string& s) {
  if (s == "0") return false;
  if (s == "1") return true;
  throw DataError("expected 0/1 flag, got '" + s + "'");
}

std::int64_t parse_int(const std::string& s) {
  std::int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw DataError("cannot parse integer '" + s + "'");
  return v;
}

}  // namespace

void write_cohort(const Cohort& cohort, const fs::path& dir) {
  fs::create_directories(dir);
  CsvWriter persons(dir / kPersonsFile, kPersonColumns);
  CsvWriter meas(dir / kMeasurementsFile, kMeasurementColumns);
  for (const auto& r : cohort) {
    const auto& f = r.fixed;
    persons << static_cast<long long>(r.person_id) << r.practice_id << std::string(sex_name(r.sex)) << r.entry_age
            << r.exit_age << r.event_age << r.death_age << r.statin_start_age << r.bpm_start_age
            << int(f.diabetes) << int(f.renal_disease) << int(f.depression) << int(f.migraine)
            << int(f.severe_mental_illness) << int(f.rheumatoid_arthritis) << int(f.atrial_fibrillation)
            << f.townsend;
    persons.end_row();
    for (const auto& m : r.measurements) {
      meas << static_cast<long long>(r.person_id) << r.practice_id << m.age << std::string(factor_name(m.factor))
           << m.value << int(m.bpm) << int(m.statin);
      meas.end_row();
    }
  }
}

Cohort read_cohort(const fs::path& dir) {
  const CsvTable persons = read_csv(dir / kPersonsFile);
  const CsvTable meas = read_csv(dir / kMeasurementsFile);
  std::vector<std::size_t> pc;
  for (const auto& c : kPersonColumns) pc.push_back(persons.column(c));
  std::vector<std::size_t> mc;
  for (const auto& c : kMeasurementColumns) mc.push_back(meas.column(c));

  Cohort cohort;
  cohort.reserve(persons.rows.size());
  std::map<std::int64_t, std::size_t> index;
  for (const auto& row : persons.rows) {
    LongitudinalRecord r;
    r.person_id = parse_int(row[pc[0]]);
    r.practice_id = static_cast<int>(parse_int(row[pc[1]]));
    r.sex = parse_sex(row[pc[2]]);
    r.entry_age = parse_double(row[pc[3]]);
    r.exit_age = parse_double(row[pc[4]]);
    r.event_age = optional_number(row[pc[5]]);
    r.death_age = optional_number(row[pc[6]]);
    r.statin_start_age = optional_number(row[pc[7]]);
    r.bpm_start_age = optional_number(row[pc[8]]);
    r.fixed.diabetes = flag(row[pc[9]]);
    r.fixed.renal_disease = flag(row[pc[10]]);
    r.fixed.depression = flag(row[pc[11]]);
    r.fixed.migraine = flag(row[pc[12]]);
    r.fixed.severe_mental_illness = flag(row[pc[13]]);
    r.fixed.rheumatoid_arthritis = flag(row[pc[14]]);
    r.fixed.atrial_fibrillation = flag(row[pc[15]]);
    r.fixed.townsend = static_cast<int>(parse_int(row[pc[16]]));
    if (r.fixed.townsend < 1 || r.fixed.townsend > 20) throw DataError("townsend must lie in 1..20");
    if (!index.emplace(r.person_id, cohort.size()).second)
      throw DataError("duplicate person_id " + std::to_string(r.person_id));
    cohort.push_back(std::move(r));
  }
  for (const auto& row : meas.rows) {
    auto it = index.find(parse_int(row[mc[0]]));
    if (it == index.end()) throw DataError("measurement for unknown person " + row[mc[0]]);
    Measurement m{parse_double(row[mc[2]]), parse_factor(row[mc[3]]), parse_double(row[mc[4]]), flag(row[mc[5]]),
                  flag(row[mc[6]])};
    cohort[it->second].measurements.push_back(m);
  }
  for (auto& r : cohort) {
    std::stable_sort(r.measurements.begin(), r.measurements.end(),
                     [](const Measurement& a, const Measurement& b) { return a.age < b.age; });
    check_record(r);
  }
  return cohort;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

template <class Derived>
json vec_json(const Eigen::MatrixBase<Derived>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

template <class Derived>
void vec_from(const json& j, Eigen::MatrixBase<Derived>& v) {
  if (v.size() != static_cast<Eigen::Index>(j.size())) throw ConfigError("vector has the wrong length");
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
}

Eigen::VectorXd dyn_vec(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const auto& e = j.at(static_cast<std::size_t>(i));
    v[i] = e.is_null() ? std::numeric_limits<double>::infinity() : e.get<double>();
  }
  return v;
}

template <class Derived>
json mat_json(const Eigen::MatrixBase<Derived>& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd mat_from(const json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j.at(static_cast<std::size_t>(r)).size()) != cols)
      throw ConfigError("ragged matrix in JSON");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = j.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

template <class T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::optional<double> opt_number(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void to_json(json& j, const PiecewiseHazard& h) { j = json{{"knots", h.knots}, {"rates", h.rates}}; }

void from_json(const json& j, PiecewiseHazard& h) {
  if (j.is_number()) {
    h = PiecewiseHazard::constant(j.get<double>());
    return;
  }
  h.knots = j.at("knots").get<std::vector<double>>();
  h.rates = j.at("rates").get<std::vector<double>>();
}

void to_json(json& j, const SimConfig& c) {
  const auto& t = c.trajectory;
  const auto& x = c.cox;
  const auto& p = c.prevalence;
  j = json{
      {"n_persons", c.n_persons},
      {"n_practices", c.n_practices},
      {"entry_age_min", c.entry_age_min},
      {"entry_age_max", c.entry_age_max},
      {"max_age", c.max_age},
      {"admin_years", c.admin_years},
      {"male_fraction", c.male_fraction},
      {"trajectory",
       {{"intercept", vec_json(t.intercept)},
        {"slope", vec_json(t.slope)},
        {"bpm_effect", t.bpm_effect},
        {"statin_effect", t.statin_effect},
        {"age_center", t.age_center},
        {"sigma", mat_json(t.sigma)},
        {"sigma_e", vec_json(t.sigma_e)}}},
      {"cox",
       {{"factors", vec_json(x.factors)},
        {"bpm", x.bpm},
        {"diabetes", x.diabetes},
        {"renal_disease", x.renal_disease},
        {"depression", x.depression},
        {"migraine", x.migraine},
        {"severe_mental_illness", x.severe_mental_illness},
        {"rheumatoid_arthritis", x.rheumatoid_arthritis},
        {"atrial_fibrillation", x.atrial_fibrillation},
        {"townsend", x.townsend},
        {"male", x.male}}},
      {"baseline_hazard", c.baseline_hazard},
      {"visit_rate", c.visit_rate},
      {"missing_prob", vec_json(c.missing_prob)},
      {"censor_rate", c.censor_rate},
      {"death_rate", c.death_rate},
      {"prevalence",
       {{"diabetes", p.diabetes},
        {"renal_disease", p.renal_disease},
        {"depression", p.depression},
        {"migraine", p.migraine},
        {"severe_mental_illness", p.severe_mental_illness},
        {"rheumatoid_arthritis", p.rheumatoid_arthritis},
        {"atrial_fibrillation", p.atrial_fibrillation}}},
      {"bpm_threshold", opt_json(c.bpm_threshold)},
      {"statin_threshold", opt_json(c.statin_threshold)},
      {"bpm_start_rate", c.bpm_start_rate},
      {"statin_start_rate", c.statin_start_rate},
      {"seed", c.seed},
  };
}

void from_json(const json& j, SimConfig& c) {
  get_if(j, "n_persons", c.n_persons);
  get_if(j, "n_practices", c.n_practices);
  get_if(j, "entry_age_min", c.entry_age_min);
  get_if(j, "entry_age_max", c.entry_age_max);
  get_if(j, "max_age", c.max_age);
  get_if(j, "admin_years", c.admin_years);
  get_if(j, "male_fraction", c.male_fraction);
  if (j.contains("trajectory")) {
    const auto& t = j.at("trajectory");
    auto& tr = c.trajectory;
    if (t.contains("intercept")) vec_from(t.at("intercept"), tr.intercept);
    if (t.contains("slope")) vec_from(t.at("slope"), tr.slope);
    get_if(t, "bpm_effect", tr.bpm_effect);
    get_if(t, "statin_effect", tr.statin_effect);
    get_if(t, "age_center", tr.age_center);
    if (t.contains("sigma")) {
      Eigen::MatrixXd s = mat_from(t.at("sigma"));
      if (s.rows() != kNumRandomEffects || s.cols() != kNumRandomEffects) throw ConfigError("sigma must be 10x10");
      tr.sigma = s;
    }
    if (t.contains("sigma_e")) vec_from(t.at("sigma_e"), tr.sigma_e);
  }
  if (j.contains("cox")) {
    const auto& x = j.at("cox");
    auto& cx = c.cox;
    if (x.contains("factors")) vec_from(x.at("factors"), cx.factors);
    get_if(x, "bpm", cx.bpm);
    get_if(x, "diabetes", cx.diabetes);
    get_if(x, "renal_disease", cx.renal_disease);
    get_if(x, "depression", cx.depression);
    get_if(x, "migraine", cx.migraine);
    get_if(x, "severe_mental_illness", cx.severe_mental_illness);
    get_if(x, "rheumatoid_arthritis", cx.rheumatoid_arthritis);
    get_if(x, "atrial_fibrillation", cx.atrial_fibrillation);
    get_if(x, "townsend", cx.townsend);
    get_if(x, "male", cx.male);
  }
  if (j.contains("baseline_hazard")) c.baseline_hazard = j.at("baseline_hazard").get<PiecewiseHazard>();
  get_if(j, "visit_rate", c.visit_rate);
  if (j.contains("missing_prob")) {
    const auto& m = j.at("missing_prob");
    if (m.is_number()) c.missing_prob.setConstant(m.get<double>());
    else vec_from(m, c.missing_prob);
  }
  get_if(j, "censor_rate", c.censor_rate);
  get_if(j, "death_rate", c.death_rate);
  if (j.contains("prevalence")) {
    const auto& p = j.at("prevalence");
    auto& pv = c.prevalence;
    get_if(p, "diabetes", pv.diabetes);
    get_if(p, "renal_disease", pv.renal_disease);
    get_if(p, "depression", pv.depression);
    get_if(p, "migraine", pv.migraine);
    get_if(p, "severe_mental_illness", pv.severe_mental_illness);
    get_if(p, "rheumatoid_arthritis", pv.rheumatoid_arthritis);
    get_if(p, "atrial_fibrillation", pv.atrial_fibrillation);
  }
  if (j.contains("bpm_threshold")) c.bpm_threshold = opt_number(j, "bpm_threshold");
  if (j.contains("statin_threshold")) c.statin_threshold = opt_number(j, "statin_threshold");
  get_if(j, "bpm_start_rate", c.bpm_start_rate);
  get_if(j, "statin_start_rate", c.statin_start_rate);
  get_if(j, "seed", c.seed);
}

void to_json(json& j, const LmemSpec& s) {
  j = json{{"convergence_tol", s.convergence_tol}, {"max_iter", s.max_iter}, {"reml", s.reml},
           {"accelerate", s.accelerate}};
}

void from_json(const json& j, LmemSpec& s) {
  get_if(j, "convergence_tol", s.convergence_tol);
  get_if(j, "max_iter", s.max_iter);
  get_if(j, "reml", s.reml);
  get_if(j, "accelerate", s.accelerate);
}

void to_json(json& j, const LmemFit& f) {
  static const char* kBetaNames[kNumFixedEffects] = {"smoke_intercept", "smoke_slope", "hdl_intercept",
                                                     "hdl_slope",       "sbp_intercept", "sbp_slope",
                                                     "sbp_bpm",         "tchol_intercept", "tchol_slope",
                                                     "tchol_statin",    "bmi_intercept", "bmi_slope"};
  json names = json::array();
  for (const char* n : kBetaNames) names.push_back(n);
  j = json{{"outcomes", {"smoke", "hdl", "sbp", "tchol", "bmi"}},
           {"beta_names", names},
           {"beta", vec_json(f.beta)},
           {"beta_cov", mat_json(f.beta_cov)},
           {"sigma", mat_json(f.sigma)},
           {"sigma_layout", "random intercepts (5) then random slopes (5), outcome order as listed"},
           {"sigma_e", vec_json(f.sigma_e)},
           {"age_center", f.age_center},
           {"log_likelihood", f.log_likelihood},
           {"n_iterations", f.n_iterations},
           {"converged", f.converged},
           {"reml", f.reml},
           {"n_persons", f.n_persons},
           {"n_obs", f.n_obs}};
}

void from_json(const json& j, LmemFit& f) {
  f.beta = dyn_vec(j.at("beta"));
  f.beta_cov = mat_from(j.at("beta_cov"));
  f.sigma = mat_from(j.at("sigma"));
  f.sigma_e = dyn_vec(j.at("sigma_e"));
  if (f.beta.size() != kNumFixedEffects || f.sigma.rows() != kNumRandomEffects ||
      f.sigma.cols() != kNumRandomEffects || f.sigma_e.size() != kNumFactors)
    throw DataError("LMEM fit JSON has unexpected dimensions");
  f.age_center = j.at("age_center").get<double>();
  f.log_likelihood = j.at("log_likelihood").get<double>();
  f.n_iterations = j.at("n_iterations").get<int>();
  f.converged = j.at("converged").get<bool>();
  f.reml = j.value("reml", false);
  f.n_persons = j.value("n_persons", 0);
  if (j.contains("n_obs")) f.n_obs = j.at("n_obs").get<std::array<int, kNumFactors>>();
}

void to_json(json& j, const CoxFit& f) {
  json beta = json::object(), se = json::object(), means = json::object();
  for (std::size_t c = 0; c < f.names.size(); ++c) {
    const auto i = static_cast<Eigen::Index>(c);
    beta[f.names[c]] = f.beta[i];
    se[f.names[c]] = std::isfinite(f.se[i]) ? json(f.se[i]) : json(nullptr);
    means[f.names[c]] = f.covariate_means[i];
  }
  j = json{{"covariates", f.names},
           {"beta", beta},
           {"se", se},
           {"covariate_means", means},
           {"linear_predictor", "sum_k (x_k - covariate_means_k) * beta_k"},
           {"baseline", {{"time", vec_json(f.knot_time)}, {"cumhaz", vec_json(f.knot_cumhaz)}}},
           {"origin", f.origin},
           {"horizon", f.horizon},
           {"n_events", f.n_events},
           {"n_obs", f.n_obs},
           {"n_iterations", f.n_iterations},
           {"log_likelihood", f.log_likelihood},
           {"max_abs_score", f.max_abs_score},
           {"held_at_zero", f.held_at_zero}};
}

void from_json(const json& j, CoxFit& f) {
  f.names = j.at("covariates").get<std::vector<std::string>>();
  const auto p = static_cast<Eigen::Index>(f.names.size());
  f.beta.resize(p);
  f.se.resize(p);
  f.covariate_means.resize(p);
  for (Eigen::Index c = 0; c < p; ++c) {
    const auto& name = f.names[static_cast<std::size_t>(c)];
    f.beta[c] = j.at("beta").at(name).get<double>();
    const auto& s = j.at("se").at(name);
    f.se[c] = s.is_null() ? std::numeric_limits<double>::infinity() : s.get<double>();
    f.covariate_means[c] = j.at("covariate_means").at(name).get<double>();
  }
  f.knot_time = dyn_vec(j.at("baseline").at("time"));
  f.knot_cumhaz = dyn_vec(j.at("baseline").at("cumhaz"));
  if (f.knot_time.size() != f.knot_cumhaz.size() || f.knot_time.size() == 0)
    throw DataError("Cox baseline knots are malformed");
  f.origin = j.at("origin").get<double>();
  f.horizon = j.at("horizon").get<double>();
  f.n_events = j.at("n_events").get<int>();
  f.n_obs = j.value("n_obs", 0);
  f.n_iterations = j.value("n_iterations", 0);
  f.log_likelihood = j.value("log_likelihood", 0.0);
  f.max_abs_score = j.value("max_abs_score", 0.0);
  if (j.contains("held_at_zero")) f.held_at_zero = j.at("held_at_zero").get<std::vector<std::string>>();
}

void to_json(json& j, const NbParams& p) {
  j = json{{"lambda", p.lambda}, {"u_s", p.u_s}, {"c_s", p.c_s}, {"c_v", p.c_v}, {"theta", p.theta}};
}

void from_json(const json& j, NbParams& p) {
  get_if(j, "lambda", p.lambda);
  get_if(j, "u_s", p.u_s);
  get_if(j, "c_s", p.c_s);
  get_if(j, "c_v", p.c_v);
  get_if(j, "theta", p.theta);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_landmark_bundle(const LandmarkModels& m, const fs::path& dir) {
  fs::create_directories(dir);
  write_json(json(m.lmem_fit), dir / "lmem.json");
  write_json(json(m.cox_10y), dir / "cox_10y.json");
  json fits = json::array();
  for (int step = 0; step < kPredictionSteps; ++step) {
    const auto k = static_cast<std::size_t>(step);
    const int s = m.la + step;
    json entry{{"s", s}, {"subcohort_size", m.subcohort_size[k]}};
    if (m.cox_5y[k]) {
      const std::string file = "cox_5y_s" + std::to_string(s) + ".json";
      write_json(json(*m.cox_5y[k]), dir / file);
      entry["file"] = file;
    } else {
      entry["file"] = nullptr;
      entry["unfittable"] = m.unfittable_reason[k];
    }
    fits.push_back(entry);
  }
  json manifest{{"landmark_age", m.la},
                {"late_conditions", m.policy.late_conditions},
                {"townsend", m.policy.townsend == TownsendMode::numeric ? "numeric" : "dummies"},
                {"covariates", m.policy.names()},
                {"landmark_cohort_size", m.landmark_cohort_size},
                {"lmem", "lmem.json"},
                {"cox_10y", "cox_10y.json"},
                {"cox_5y", fits}};
  write_json(manifest, dir / "manifest.json");
}

LandmarkModels read_landmark_bundle(const fs::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  LandmarkModels m;
  m.la = manifest.at("landmark_age").get<int>();
  m.policy.late_conditions = manifest.at("late_conditions").get<bool>();
  m.policy.townsend = manifest.at("townsend").get<std::string>() == "numeric" ? TownsendMode::numeric
                                                                              : TownsendMode::dummies;
  m.landmark_cohort_size = manifest.value("landmark_cohort_size", 0);
  m.lmem_fit = read_json(dir / manifest.at("lmem").get<std::string>()).get<LmemFit>();
  m.cox_10y = read_json(dir / manifest.at("cox_10y").get<std::string>()).get<CoxFit>();
  const auto& fits = manifest.at("cox_5y");
  if (fits.size() != kPredictionSteps) throw DataError("bundle manifest must list 11 prediction times");
  for (std::size_t k = 0; k < fits.size(); ++k) {
    const auto& e = fits[k];
    m.subcohort_size[k] = e.value("subcohort_size", 0);
    if (e.at("file").is_null()) {
      m.unfittable_reason[k] = e.value("unfittable", std::string("unfittable"));
    } else {
      m.cox_5y[k] = read_json(dir / e.at("file").get<std::string>()).get<CoxFit>();
    }
  }
  return m;
}

}  // namespace cvdsched
