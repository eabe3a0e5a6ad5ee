#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace cfpanel {

// The known link G: strictly increasing, mapping the reals onto `range`.
// Only the forward map and its inverse enter the estimator.
class LinkFunction {
 public:
  enum class Kind { kLogit, kExp, kCustom };

  struct Range {
    double lo;
    double hi;  // may be +infinity
  };

  static LinkFunction logit(double clamp_eps = 1e-10);
  static LinkFunction exp(double clamp_eps = 1e-10);
  // Runs validate_link before returning.
  static LinkFunction custom(std::string name, std::function<double(double)> forward,
                             std::function<double(double)> inverse, Range range,
                             double clamp_eps = 1e-10);

  const std::string& name() const { return name_; }
  Kind kind() const { return kind_; }
  Range range() const { return range_; }
  double clamp_eps() const { return clamp_eps_; }

  double forward(double x) const;
  double inverse(double y) const;

  // Pulls y strictly inside the range. Bounded ranges use margins of
  // eps * (hi - lo); (0, inf) ranges use max(y, eps).
  double clamp(double y) const;
  // Same, counting an event whenever the value moved.
  double clamp(double y, std::size_t& events) const {
    const double c = clamp(y);
    if (c != y) ++events;
    return c;
  }

 private:
  LinkFunction(std::string name, Kind kind, Range range, double eps)
      : name_(std::move(name)), kind_(kind), range_(range), clamp_eps_(eps) {}

  std::string name_;
  Kind kind_;
  Range range_;
  double clamp_eps_;
  std::function<double(double)> forward_;
  std::function<double(double)> inverse_;
};

LinkFunction logit_link();
LinkFunction exp_link();
double clamp_to_range(const LinkFunction& link, double y);

// Monotonicity on a 1000-point lattice plus both round trips to 1e-12.
// Throws InputError naming the first failure.
void validate_link(const LinkFunction& link);

// Name -> link lookup; `logit` and `exp` are always present.
class LinkRegistry {
 public:
  LinkRegistry();
  void add(LinkFunction link);
  const LinkFunction& get(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, LinkFunction> links_;
};

}  // namespace cfpanel
