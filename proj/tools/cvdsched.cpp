// Command-line front end: simulate, fit, schedule, validate, sweep, report.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cli/commands.hpp"

namespace {

enum ExitCode { kOk = 0, kConfigFailure = 2, kNumericFailure = 3, kDataFailure = 4 };

}  // namespace

int main(int argc, char** argv) {
  using namespace cvdsched;

  CLI::App app{"Personalised CVD risk-assessment scheduling"};
  app.require_subcommand(1);

  std::string config_path, out_dir, sex, landmarks, cohort_dir, grid_path;
  int threads = 0;
  std::optional<std::uint64_t> seed;
  bool no_split = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Run configuration (JSON)");
    sub->add_option("--out", out_dir, "Run directory");
    sub->add_option("--sex", sex, "M, F or both")->check(CLI::IsMember({"M", "F", "both"}));
    sub->add_option("--landmarks", landmarks, "Comma-separated landmark ages, e.g. 40,45");
    sub->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "Overrides the simulation and split seeds");
  };
  CLI::App* simulate = app.add_subcommand("simulate", "Write a synthetic cohort with its ground truth");
  CLI::App* fit = app.add_subcommand("fit", "Split by practice and fit landmark models on the derivation side");
  CLI::App* schedule = app.add_subcommand("schedule", "Risk profiles and Net Benefit optimal schedules");
  CLI::App* validate = app.add_subcommand("validate", "Dynamic c-index and Brier score on the validation side");
  CLI::App* sweep = app.add_subcommand("sweep", "Net Benefit sensitivity sweep over cached schedule terms");
  CLI::App* report = app.add_subcommand("report", "Collect run summaries into report.json and report.txt");
  for (CLI::App* sub : {simulate, fit, schedule, validate, sweep, report}) common(sub);
  for (CLI::App* sub : {fit, schedule, validate})
    sub->add_option("--cohort", cohort_dir, "Cohort directory (persons.csv, measurements.csv)");
  fit->add_flag("--no-split", no_split, "Treat the input cohort as the derivation set");
  sweep->add_option("--grid", grid_path, "JSON array of {parameter, values} grids");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigFailure;
  }

  try {
    cli::RunConfig config =
        cli::load_run_config(config_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(config_path));
    if (!out_dir.empty()) config.out_dir = out_dir;
    if (!sex.empty()) config.sexes = cli::parse_sex_filter(sex);
    if (!landmarks.empty()) config.landmarks = cli::parse_landmarks(landmarks);
    if (threads > 0) config.threads = threads;
    if (seed) {
      config.simulation.seed = *seed;
      if (config.split) config.split->seed = *seed;
    }
    if (!cohort_dir.empty()) config.cohort_dir = std::filesystem::path(cohort_dir);
    if (no_split) config.split.reset();
    if (!grid_path.empty()) config.sweep = cli::parse_sweep_grids(read_json(grid_path));
    config.validate();
#ifdef _OPENMP
    omp_set_num_threads(config.threads);
#endif

    if (*simulate) cli::cmd_simulate(config);
    else if (*fit) cli::cmd_fit(config);
    else if (*schedule) cli::cmd_schedule(config);
    else if (*validate) cli::cmd_validate(config);
    else if (*sweep) cli::cmd_sweep(config);
    else if (*report) cli::cmd_report(config);
  } catch (const ConfigError& e) {
    std::cerr << "cvdsched: configuration error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const NumericError& e) {
    std::cerr << "cvdsched: numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const DataError& e) {
    std::cerr << "cvdsched: data error: " << e.what() << '\n';
    return kDataFailure;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "cvdsched: configuration error: " << e.what() << '\n';
    return kConfigFailure;
  }
  return kOk;
}
