#include "cfpanel/ecdf.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "cfpanel/error.hpp"

namespace cfpanel {

Ecdf::Ecdf(PointSet points) : points_(std::move(points)) {
  if (points_.empty()) throw InputError("cannot build an empirical CDF from an empty sample");
  const std::size_t n = points_.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return points_[a][0] < points_[b][0]; });
  sorted_ = PointSet(points_.dim());
  sorted_.reserve(n);
  first_.reserve(n);
  for (std::size_t i : order) {
    sorted_.push_back(points_[i]);
    first_.push_back(points_[i][0]);
  }
}

void Ecdf::check_dim(std::span<const double> x) const {
  if (x.size() != dim()) {
    throw InputError("ECDF evaluated at a " + std::to_string(x.size()) + "-vector, expected " +
                     std::to_string(dim()));
  }
}

std::size_t Ecdf::count(std::span<const double> x) const {
  check_dim(x);
  const auto end = static_cast<std::size_t>(std::upper_bound(first_.begin(), first_.end(), x[0]) - first_.begin());
  if (dim() == 1) return end;
  std::size_t c = 0;
  for (std::size_t i = 0; i < end; ++i) {
    const auto p = sorted_[i];
    bool inside = true;
    for (std::size_t k = 1; k < p.size(); ++k) {
      if (!(p[k] <= x[k])) {
        inside = false;
        break;
      }
    }
    c += inside ? 1 : 0;
  }
  return c;
}

std::size_t Ecdf::count_naive(std::span<const double> x) const {
  check_dim(x);
  std::size_t c = 0;
  for (std::size_t i = 0; i < size(); ++i) c += dominated(points_[i], x) ? 1 : 0;
  return c;
}

std::vector<double> Ecdf::coordinate_support(std::size_t axis) const {
  if (axis >= dim()) throw InputError("axis out of range");
  std::vector<double> v(size());
  for (std::size_t i = 0; i < size(); ++i) v[i] = points_[i][axis];
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace cfpanel
