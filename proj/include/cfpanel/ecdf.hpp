#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cfpanel/points.hpp"

namespace cfpanel {

// Multivariate empirical CDF: eval(x) = #{i : p_i <= x componentwise} / n.
// Duplicates count with multiplicity. Immutable after construction.
class Ecdf {
 public:
  explicit Ecdf(PointSet points);

  std::size_t dim() const { return points_.dim(); }
  std::size_t size() const { return points_.size(); }
  const PointSet& points() const { return points_; }

  // Exact dominance count; uses the first-coordinate index.
  std::size_t count(std::span<const double> x) const;
  // Reference O(n d) scan, kept for cross-checking the indexed path.
  std::size_t count_naive(std::span<const double> x) const;

  double eval(std::span<const double> x) const {
    return static_cast<double>(count(x)) / static_cast<double>(size());
  }

  // Sorted distinct values observed on one axis.
  std::vector<double> coordinate_support(std::size_t axis) const;

 private:
  void check_dim(std::span<const double> x) const;

  PointSet points_;
  PointSet sorted_;            // points ordered by first coordinate
  std::vector<double> first_;  // their first coordinates
};

inline Ecdf build_ecdf(PointSet points) { return Ecdf(std::move(points)); }

}  // namespace cfpanel
