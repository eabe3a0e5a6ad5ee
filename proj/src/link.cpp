#include "cfpanel/link.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cfpanel/error.hpp"

namespace cfpanel {

LinkFunction LinkFunction::logit(double clamp_eps) {
  return LinkFunction("logit", Kind::kLogit, {0.0, 1.0}, clamp_eps);
}

LinkFunction LinkFunction::exp(double clamp_eps) {
  return LinkFunction("exp", Kind::kExp, {0.0, std::numeric_limits<double>::infinity()}, clamp_eps);
}

LinkFunction LinkFunction::custom(std::string name, std::function<double(double)> forward,
                                  std::function<double(double)> inverse, Range range, double clamp_eps) {
  if (!forward || !inverse) throw InputError("custom link '" + name + "' needs forward and inverse maps");
  if (!(range.lo < range.hi)) throw InputError("custom link '" + name + "' has an empty range");
  LinkFunction link(std::move(name), Kind::kCustom, range, clamp_eps);
  link.forward_ = std::move(forward);
  link.inverse_ = std::move(inverse);
  validate_link(link);
  return link;
}

double LinkFunction::forward(double x) const {
  switch (kind_) {
    case Kind::kLogit:
      return 1.0 / (1.0 + std::exp(-x));
    case Kind::kExp:
      return std::exp(x);
    case Kind::kCustom:
      break;
  }
  return forward_(x);
}

double LinkFunction::inverse(double y) const {
  switch (kind_) {
    case Kind::kLogit:
      return std::log(y) - std::log1p(-y);
    case Kind::kExp:
      return std::log(y);
    case Kind::kCustom:
      break;
  }
  return inverse_(y);
}

double LinkFunction::clamp(double y) const {
  if (std::isfinite(range_.hi)) {
    const double span = range_.hi - range_.lo;
    return std::min(std::max(y, range_.lo + clamp_eps_ * span), range_.hi - clamp_eps_ * span);
  }
  return std::max(y, range_.lo + clamp_eps_);
}

LinkFunction logit_link() { return LinkFunction::logit(); }
LinkFunction exp_link() { return LinkFunction::exp(); }
double clamp_to_range(const LinkFunction& link, double y) { return link.clamp(y); }

void validate_link(const LinkFunction& link) {
  const auto fail = [&](const std::string& what) {
    throw InputError("link '" + link.name() + "' rejected: " + what);
  };
  // Lattice on [-5, 5): 1000 points.
  double prev = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 1000; ++i) {
    const double x = -5.0 + 0.01 * i;
    const double y = link.forward(x);
    if (!std::isfinite(y) || !(y > prev)) fail("forward map is not strictly increasing at x=" + std::to_string(x));
    if (!(y > link.range().lo) || !(y < link.range().hi)) fail("forward value outside the declared range");
    if (std::abs(link.inverse(y) - x) > 1e-12 * std::max(1.0, std::abs(x))) {
      fail("inverse(forward(x)) != x at x=" + std::to_string(x));
    }
    prev = y;
  }
  const auto r = link.range();
  const double lo = link.forward(-5.0);
  const double hi = link.forward(5.0);
  for (int i = 1; i < 1000; ++i) {
    const double y = lo + (hi - lo) * i / 1000.0;
    if (!(y > r.lo && y < r.hi)) continue;
    if (std::abs(link.forward(link.inverse(y)) - y) > 1e-12 * std::max(1.0, std::abs(y))) {
      fail("forward(inverse(y)) != y at y=" + std::to_string(y));
    }
  }
}

LinkRegistry::LinkRegistry() {
  add(LinkFunction::logit());
  add(LinkFunction::exp());
}

void LinkRegistry::add(LinkFunction link) {
  const std::string name = link.name();
  links_.insert_or_assign(name, std::move(link));
}

const LinkFunction& LinkRegistry::get(const std::string& name) const {
  const auto it = links_.find(name);
  if (it == links_.end()) {
    std::string valid;
    for (const auto& [k, v] : links_) valid += (valid.empty() ? "" : ", ") + k;
    throw InputError("unknown link '" + name + "' (valid: " + valid + ")");
  }
  return it->second;
}

std::vector<std::string> LinkRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : links_) out.push_back(k);
  return out;
}

}  // namespace cfpanel
