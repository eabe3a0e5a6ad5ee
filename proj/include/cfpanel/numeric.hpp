#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace cfpanel {

// Neumaier's variant of compensated summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Linear interpolation between order statistics (Hyndman-Fan type 7).
// `sorted` must be nonempty and ascending.
double quantile_sorted(std::span<const double> sorted, double prob);

}  // namespace cfpanel
