#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvdsched/cohort_sim.hpp"
#include "cvdsched/landmark.hpp"
#include "cvdsched/lmem.hpp"
#include "cvdsched/netbenefit.hpp"
#include "cvdsched/survival.hpp"

namespace cvdsched {

using nlohmann::json;

// Shortest round-trip decimal representation.
std::string format_double(double v);
double parse_double(const std::string& s);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  CsvWriter& operator<<(const std::string& field);
  CsvWriter& operator<<(const char* field) { return *this << std::string(field); }
  CsvWriter& operator<<(double v) { return *this << format_double(v); }
  CsvWriter& operator<<(int v) { return *this << std::to_string(v); }
  CsvWriter& operator<<(long v) { return *this << std::to_string(v); }
  CsvWriter& operator<<(long long v) { return *this << std::to_string(v); }
  CsvWriter& operator<<(unsigned long v) { return *this << std::to_string(v); }
  CsvWriter& operator<<(const std::optional<double>& v) { return *this << (v ? format_double(*v) : std::string()); }
  void end_row();

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::size_t in_row_ = 0;
};

inline constexpr const char* kPersonsFile = "persons.csv";
inline constexpr const char* kMeasurementsFile = "measurements.csv";

void write_cohort(const Cohort& cohort, const std::filesystem::path& dir);
Cohort read_cohort(const std::filesystem::path& dir);

// JSON adapters (found by nlohmann through ADL).
void to_json(json& j, const PiecewiseHazard& h);
void from_json(const json& j, PiecewiseHazard& h);
void to_json(json& j, const SimConfig& c);
void from_json(const json& j, SimConfig& c);
void to_json(json& j, const LmemSpec& s);
void from_json(const json& j, LmemSpec& s);
void to_json(json& j, const LmemFit& f);
void from_json(const json& j, LmemFit& f);
void to_json(json& j, const CoxFit& f);
void from_json(const json& j, CoxFit& f);
void to_json(json& j, const NbParams& p);
void from_json(const json& j, NbParams& p);

json read_json(const std::filesystem::path& path);
void write_json(const json& j, const std::filesystem::path& path);

/// Directory of JSON fits plus manifest.json.
void write_landmark_bundle(const LandmarkModels& models, const std::filesystem::path& dir);
LandmarkModels read_landmark_bundle(const std::filesystem::path& dir);

}  // namespace cvdsched
