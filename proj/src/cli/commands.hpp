#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cvdsched/cohort_sim.hpp"
#include "cvdsched/io.hpp"
#include "cvdsched/landmark.hpp"
#include "cvdsched/lmem.hpp"
#include "cvdsched/netbenefit.hpp"

namespace cvdsched::cli {

struct SplitOptions {
  double fraction = 2.0 / 3.0;
  std::uint64_t seed = 1;
};

/// Everything a run needs; read from JSON and then patched by flags.
struct RunConfig {
  SimConfig simulation;
  std::filesystem::path out_dir = ".";
  std::optional<std::filesystem::path> cohort_dir;  // overrides the run-directory default
  std::optional<SplitOptions> split = SplitOptions{};
  std::vector<Sex> sexes{Sex::female, Sex::male};
  std::vector<int> landmarks{kLandmarkGrid.begin(), kLandmarkGrid.end()};
  LmemSpec lmem;
  TownsendMode townsend = TownsendMode::numeric;
  bool allow_nonconverged = false;
  NbParams nb_params;
  std::vector<int> f_set{kDefaultFrequencies.begin(), kDefaultFrequencies.end()};
  std::vector<SweepGrid> sweep;
  int threads = 1;

  void validate() const;
};

RunConfig load_run_config(const std::optional<std::filesystem::path>& path);
std::vector<SweepGrid> parse_sweep_grids(const json& j);
std::vector<int> parse_landmarks(const std::string& csv);
std::vector<Sex> parse_sex_filter(const std::string& value);

// Run-directory layout shared by the commands.
std::filesystem::path derivation_dir(const RunConfig& c);
std::filesystem::path validation_dir(const RunConfig& c);
std::filesystem::path model_dir(const RunConfig& c, Sex sex, int la);

void cmd_simulate(const RunConfig& c);
void cmd_fit(const RunConfig& c);
void cmd_schedule(const RunConfig& c);
void cmd_validate(const RunConfig& c);
void cmd_sweep(const RunConfig& c);
void cmd_report(const RunConfig& c);

}  // namespace cvdsched::cli
