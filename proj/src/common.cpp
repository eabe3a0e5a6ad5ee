#include <cmath>

#include "cfpanel/error.hpp"
#include "cfpanel/numeric.hpp"
#include "cfpanel/points.hpp"

namespace cfpanel {

double quantile_sorted(std::span<const double> sorted, double prob) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = prob * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

PointSet::PointSet(std::size_t dim, std::vector<double> values)
    : dim_(dim), values_(std::move(values)) {
  if (dim_ == 0 || values_.size() % dim_ != 0) {
    throw InputError("point buffer size is not a multiple of the dimension");
  }
}

void PointSet::push_back(std::span<const double> p) {
  if (p.size() != dim_) throw InputError("point dimension mismatch");
  values_.insert(values_.end(), p.begin(), p.end());
}

}  // namespace cfpanel
