#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cvdsched {

// Error families surfaced to the CLI as distinct exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Time-varying risk factors, in the order the mixed model stacks them.
enum class Factor : int { smoke = 0, hdl = 1, sbp = 2, tchol = 3, bmi = 4 };
inline constexpr int kNumFactors = 5;
inline constexpr std::array<Factor, kNumFactors> kAllFactors{
    Factor::smoke, Factor::hdl, Factor::sbp, Factor::tchol, Factor::bmi};

std::string_view factor_name(Factor f);
Factor parse_factor(std::string_view name);

enum class Sex { male, female };
std::string_view sex_name(Sex s);
Sex parse_sex(std::string_view name);

struct FixedCovariates {
  bool diabetes = false;
  bool renal_disease = false;
  bool depression = false;
  bool migraine = false;
  bool severe_mental_illness = false;
  bool rheumatoid_arthritis = false;
  bool atrial_fibrillation = false;
  int townsend = 10;  // deprivation category 1..20
};

struct Measurement {
  double age = 0.0;
  Factor factor = Factor::smoke;
  double value = 0.0;
  bool bpm = false;
  bool statin = false;
};

struct LongitudinalRecord {
  std::int64_t person_id = 0;
  int practice_id = 0;
  Sex sex = Sex::female;
  double entry_age = 0.0;
  double exit_age = 0.0;
  FixedCovariates fixed;
  std::vector<Measurement> measurements;  // sorted by age
  std::optional<double> event_age;
  std::optional<double> death_age;
  std::optional<double> statin_start_age;
  std::optional<double> bpm_start_age;

  // Blood-pressure medication status known at `age`.
  bool on_bpm_at(double age) const { return bpm_start_age && *bpm_start_age <= age; }
};

using Cohort = std::vector<LongitudinalRecord>;

// Throws DataError when a record breaks its ordering invariants.
void check_record(const LongitudinalRecord& r);

}  // namespace cvdsched
