#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cfpanel/dgp.hpp"
#include "cfpanel/estimator.hpp"

namespace cfpanel {

// A DGP with its estimation target.
struct Design {
  std::string name;
  DgpSpec spec;
  MomentModel model;
  std::size_t target_index = 0;  // component of theta compared with true_theta
  bool relative_bias = false;
  double target_attrition = 0.0;
  CalibrationResult calibration;
  std::size_t n1 = 1000;
  std::size_t nr = 1000;
  std::size_t S = 1000;
};

std::vector<std::string> design_names();
// Throws InputError listing the valid names.
Design named_design(const std::string& name, std::size_t calibration_draws = 1'000'000);

struct McConfig {
  Design design;
  std::vector<std::pair<std::size_t, std::size_t>> sizes;  // (n1, nr); default: the design's
  std::size_t S = 0;                                       // default: the design's
  std::vector<double> levels{0.90, 0.95, 0.99};
  std::uint64_t seed = 1;
  EstimateOptions estimate;
  int threads = 1;
  bool progress = true;  // rep=<s>/<S> lines on standard error
};

struct Metrics {
  double bias = 0.0;  // relative to theta_true when the design says so
  double rmse = 0.0;
  double mae = 0.0;
};

struct RepOutcome {
  bool ok = false;
  double corrected = 0.0;
  double naive = 0.0;
  double replicate = 0.0;  // one bootstrap draw
  double total_mass = 0.0;
  double negative_mass = 0.0;
};

struct SizeReport {
  std::size_t n1 = 0;
  std::size_t nr = 0;
  std::size_t completed = 0;
  std::size_t failed = 0;
  Metrics corrected;
  Metrics naive;
  std::vector<double> coverage;  // corrected estimator, one per level
  double mean_total_mass = 0.0;
  double min_total_mass = 0.0;
  double max_total_mass = 0.0;
  double mean_negative_mass = 0.0;
  std::vector<RepOutcome> outcomes;  // by replication index; not serialized
};

struct McReport {
  std::string design;
  double theta_true = 0.0;
  double theta_true_se = 0.0;
  bool relative_bias = false;
  std::size_t S = 0;
  std::uint64_t seed = 0;
  std::vector<double> levels;
  std::vector<SizeReport> sizes;
  double wall_seconds = 0.0;  // not serialized
};

McReport run_mc(const McConfig& config);

Metrics summarize(std::span<const double> estimates, double theta_true, bool relative);

enum class ReportFormat { kJson, kCsv, kMarkdown };
ReportFormat parse_report_format(const std::string& name);

std::string report_to_json(const McReport& report);
McReport report_from_json(const std::string& text);
std::string report_to_csv(const McReport& report);
std::string report_to_markdown(const McReport& report);
void emit_report(const McReport& report, ReportFormat format, const std::filesystem::path& path);

}  // namespace cfpanel
