#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cfpanel/dgp.hpp"
#include "cfpanel/estimator.hpp"
#include "cfpanel/harness.hpp"

namespace cfpanel {

struct ModelConfig {
  std::string name = "mean";
  std::size_t index = 0;                 // mean
  std::optional<std::size_t> i, j;       // product-moment; default z1[0] and z2[0]
  double a = 1.0, b = 1.0;               // cond-prob
  std::vector<std::size_t> x_indices{0};  // twoway-fe
  std::size_t y_index = 1;               // twoway-fe
};

struct DesignConfig {
  std::string name;  // a named design, or empty for a custom one
  std::string kind;  // discrete | copula | fe
  // discrete
  std::size_t m = 5;
  std::vector<std::vector<double>> transition;
  std::string transition_csv;
  double stay_diag = 0.23;
  // copula
  double nu = 2.0, mu1 = 1.0, mu2 = 1.0, cap_quantile = 0.99;
  // fe
  double stay_rate = 0.6;
  // shared
  std::optional<double> c1, c2;
  double intercept = 0.0;
  std::optional<double> target_attrition;
};

// Every field has a default; see config_help() for the key list.
struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 0;  // 0: logical CPU count
  std::string out = ".";
  std::string link = "logit";
  std::string grid = "paper-tuples";
  ModelConfig model;
  double tol = 1e-10;
  std::size_t max_iter = 100;
  std::size_t bootstrap_B = 0;
  std::vector<double> levels{0.90, 0.95, 0.99};
  std::string panel;
  std::string refreshment;
  bool export_measure = false;
  DesignConfig design;
  std::size_t n1 = 1000, nr = 1000;
  std::size_t mc_S = 0;  // 0: the design's default
  std::vector<std::size_t> mc_sizes;
  std::string mc_format = "markdown-table";
  double calibrate_tol = 1e-4;
  std::size_t calibrate_draws = 1'000'000;
};

// Parses the JSON configuration text. Unknown keys and wrong types throw
// InputError naming the key.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// The documented key list with defaults, for --help.
std::string config_help();

MomentModel build_model(const ModelConfig& mc, std::size_t d);
// A named design, or a custom one built (and calibrated when a target
// attrition is given) from the config.
Design build_design(const RunConfig& cfg);

}  // namespace cfpanel
