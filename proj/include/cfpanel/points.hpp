#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cfpanel {

// A row-major set of fixed-dimension real vectors.
class PointSet {
 public:
  PointSet() = default;
  explicit PointSet(std::size_t dim) : dim_(dim) {}
  PointSet(std::size_t dim, std::vector<double> values);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : values_.size() / dim_; }
  bool empty() const { return size() == 0; }

  std::span<const double> operator[](std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  std::span<double> mutable_row(std::size_t i) {
    return {values_.data() + i * dim_, dim_};
  }

  void push_back(std::span<const double> p);
  void reserve(std::size_t n) { values_.reserve(n * dim_); }
  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

// True when a <= b in every coordinate.
inline bool dominated(std::span<const double> a, std::span<const double> b) {
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!(a[k] <= b[k])) return false;
  }
  return true;
}

}  // namespace cfpanel
