#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cfpanel/dataio.hpp"
#include "cfpanel/ecdf.hpp"
#include "cfpanel/rng.hpp"
#include "cfpanel/transform.hpp"

namespace cfpanel {

enum class GridStrategy { kPaperTuples, kFullProduct };

std::string to_string(GridStrategy s);
GridStrategy parse_grid_strategy(const std::string& name);

// Discontinuity grid of the corrected CDF: z1 atoms x z2 atoms.
struct JumpGrid {
  GridStrategy strategy = GridStrategy::kPaperTuples;
  std::size_t dim = 0;   // per-period dimension d
  PointSet z1_atoms;     // deduplicated, lexicographic order
  PointSet z2_atoms;     // stayers' z2 union refreshment, deduplicated
  std::vector<double> h; // 2d half-widths: z1 coordinates, then z2

  std::size_t size() const { return z1_atoms.size() * z2_atoms.size(); }
};

// h_k is half the smallest nonzero gap on coordinate k (1 when the
// coordinate takes a single value). Throws InputError when the grid would
// exceed `max_atoms`.
JumpGrid build_grid(const ValidatedData& data, GridStrategy strategy,
                    std::size_t max_atoms = 20'000'000);

// Copy of `grid` with every h_k multiplied by `factor` (0 < factor <= 1).
JumpGrid scale_h(JumpGrid grid, double factor);

// Read-only view of weighted atoms in R^dim.
struct AtomView {
  std::size_t dim = 0;
  std::span<const double> coords;   // size() * dim, row-major
  std::span<const double> weights;

  std::size_t size() const { return weights.size(); }
  std::span<const double> point(std::size_t i) const { return coords.subspan(i * dim, dim); }
};

struct MeasureDiagnostics {
  std::size_t grid_atoms = 0;
  std::size_t dropped_atoms = 0;
  double dropped_mass = 0.0;
  std::size_t clamp_events = 0;
  double top_corner_value = 0.0;  // F-hat just above the grid's top corner
};

// Atoms with real (possibly negative) weights. Immutable.
class SignedMeasure {
 public:
  SignedMeasure() = default;
  SignedMeasure(std::size_t dim, std::vector<double> coords, std::vector<double> weights);

  // Uniform empirical measure of `points`; duplicates merge into one atom.
  static SignedMeasure uniform(const PointSet& points);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return weights_.size(); }
  std::span<const double> point(std::size_t i) const { return {coords_.data() + i * dim_, dim_}; }
  double weight(std::size_t i) const { return weights_[i]; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& coords() const { return coords_; }
  double total_mass() const { return total_mass_; }
  double negative_mass() const { return negative_mass_; }
  AtomView view() const { return {dim_, coords_, weights_}; }

  MeasureDiagnostics diagnostics;

 private:
  std::size_t dim_ = 0;
  std::vector<double> coords_;
  std::vector<double> weights_;
  double total_mass_ = 0.0;
  double negative_mass_ = 0.0;
};

struct JumpOptions {
  int threads = 1;
  double drop_threshold = 1e-15;
};

// Inclusion-exclusion jump of F-hat over the 2^(2d) corners zeta +/- h at
// every grid point. Corners below the stayers' support evaluate to zero.
SignedMeasure jump_masses(const CorrectedCdf& f, const JumpGrid& grid, const JumpOptions& opts = {});

// The same differencing applied to a plain ECDF in integer counts, so an
// ECDF of n distinct points yields exactly 1/n per point.
SignedMeasure ecdf_jump_masses(const Ecdf& ecdf, const PointSet& grid_points, std::span<const double> h);

// Sum of weight * g(atom) with compensated accumulation per component.
// Throws DomainError naming the atom when g is not finite there.
using AtomFunction = std::function<void(std::span<const double> z, std::span<double> out)>;
std::vector<double> integrate(const AtomView& mu, const AtomFunction& g, std::size_t k);

struct ProbabilityMeasure {
  std::size_t dim = 0;
  std::vector<double> coords;
  std::vector<double> weights;  // nonnegative, sum to 1

  std::size_t size() const { return weights.size(); }
  std::span<const double> point(std::size_t i) const { return {coords.data() + i * dim, dim}; }
};

// Negative weights set to zero, the rest renormalized.
ProbabilityMeasure trim_and_normalize(const AtomView& mu);

// n i.i.d. draws, deterministic for a given stream.
PointSet sample_atoms(const ProbabilityMeasure& mu, std::size_t n, Rng& rng);

// Header z_1..z_m,weight.
void export_measure_csv(const AtomView& mu, const std::filesystem::path& path);

}  // namespace cfpanel
