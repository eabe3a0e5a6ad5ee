#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cfpanel/points.hpp"

namespace cfpanel {

// One first-wave unit. `z2` is present exactly for stayers.
struct PanelUnit {
  std::string id;
  std::vector<double> z1;
  std::optional<std::vector<double>> z2;

  bool stays() const { return z2.has_value(); }
};

struct PanelDataset {
  std::size_t dim = 0;
  std::vector<PanelUnit> units;

  std::size_t n1() const { return units.size(); }
  std::size_t n2() const;
};

struct RefreshmentDataset {
  PointSet rows;
};

// Column names for the panel file. Columns are looked up by header name.
struct PanelSchema {
  std::string id = "id";
  std::string stay = "w";
  std::vector<std::string> z1;
  std::vector<std::string> z2;

  // id, w, z1_1..z1_d, z2_1..z2_d
  static PanelSchema standard(std::size_t dim);
  std::size_t dim() const { return z1.size(); }
};

struct RefreshmentSchema {
  std::vector<std::string> z2;

  static RefreshmentSchema standard(std::size_t dim);
  std::size_t dim() const { return z2.size(); }
};

// Immutable after construction.
struct ValidatedData {
  PanelDataset panel;
  RefreshmentDataset refreshment;
  std::size_t dim = 0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  std::size_t nr = 0;
  double attrition_rate = 0.0;  // 1 - n2/n1

  // First-wave z1 of all units, stayers' z1 and z2, in panel order.
  PointSet first_wave() const;
  PointSet stayers_z1() const;
  PointSet stayers_z2() const;
  // Stayers' concatenated (z1, z2).
  PointSet stayers_joint() const;
};

// Loading. Without an explicit schema the dimension is inferred from the
// z1_k columns in the header.
PanelDataset load_panel_csv(const std::filesystem::path& path,
                            const std::optional<PanelSchema>& schema = std::nullopt);
RefreshmentDataset load_refreshment_csv(const std::filesystem::path& path,
                                        const std::optional<RefreshmentSchema>& schema = std::nullopt);

ValidatedData validate(PanelDataset panel, RefreshmentDataset refreshment);

// Writers use the standard schemas and 17 significant digits.
void write_panel_csv(const PanelDataset& panel, const std::filesystem::path& path);
void write_refreshment_csv(const RefreshmentDataset& refreshment, const std::filesystem::path& path);

// Shortest text that parses back to the same double (at most 17 digits).
std::string format_double(double x);

}  // namespace cfpanel
