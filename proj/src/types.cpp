#include "cvdsched/types.hpp"

#include <cmath>

namespace cvdsched {

std::string_view factor_name(Factor f) {
  switch (f) {
    case Factor::smoke: return "smoke";
    case Factor::hdl: return "hdl";
    case Factor::sbp: return "sbp";
    case Factor::tchol: return "tchol";
    case Factor::bmi: return "bmi";
  }
  return "?";
}

Factor parse_factor(std::string_view name) {
  for (Factor f : kAllFactors)
    if (factor_name(f) == name) return f;
  throw DataError("unknown risk factor '" + std::string(name) + "'");
}

std::string_view sex_name(Sex s) { return s == Sex::male ? "M" : "F"; }

Sex parse_sex(std::string_view name) {
  if (name == "M") return Sex::male;
  if (name == "F") return Sex::female;
  throw DataError("unknown sex '" + std::string(name) + "'");
}

void check_record(const LongitudinalRecord& r) {
  auto fail = [&](const std::string& what) {
    throw DataError("person " + std::to_string(r.person_id) + ": " + what);
  };
  if (!std::isfinite(r.entry_age) || !std::isfinite(r.exit_age) || r.entry_age > r.exit_age)
    fail("entry_age must not exceed exit_age");
  double prev = r.entry_age;
  for (const auto& m : r.measurements) {
    if (!std::isfinite(m.age) || !std::isfinite(m.value)) fail("non-finite measurement");
    if (m.age < prev) fail("measurements not sorted or before entry");
    prev = m.age;
  }
  if (prev > r.exit_age) fail("measurement after exit");
  auto within = [&](const std::optional<double>& a, const char* name) {
    if (a && (*a < r.entry_age || *a > r.exit_age)) fail(std::string(name) + " outside follow-up");
  };
  within(r.event_age, "event_age");
  within(r.death_age, "death_age");
  within(r.statin_start_age, "statin_start_age");
  within(r.bpm_start_age, "bpm_start_age");
}

}  // namespace cvdsched
