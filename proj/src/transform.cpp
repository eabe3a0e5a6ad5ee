#include "cfpanel/transform.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cfpanel/error.hpp"

namespace cfpanel {

namespace {

double clamped_inverse(const LinkFunction& link, double y, std::size_t* events) {
  std::size_t local = 0;
  const double c = link.clamp(y, local);
  if (events) *events += local;
  return link.inverse(c);
}

void check_support(double F, const char* which) {
  if (!(F > 0.0)) {
    throw DomainError(std::string("support violation: ") + which +
                      " is zero at the query point (below every observed point)");
  }
}

}  // namespace

double phi(double p, double F1, double F2, double F1w, double F2w, double Fw, const LinkFunction& link,
           std::size_t* clamp_events) {
  check_support(F1, "F1");
  check_support(F2, "F2");
  if (!(p > 0.0)) throw DomainError("phi requires p > 0");
  const double k1 = clamped_inverse(link, p * F1w / F1, clamp_events);
  const double k2 = clamped_inverse(link, p * F2w / F2, clamp_events);
  const double k0 = clamped_inverse(link, p, clamp_events);
  return p * Fw / link.forward(k1 + k2 - k0);
}

double phi_extended(double p, double F1, double F2, double F1w, double F2w, double Fw,
                    const LinkFunction& link, std::size_t* clamp_events) {
  if (Fw == 0.0) return 0.0;
  // Fw > 0 implies F1w, F2w > 0 and, since stayers are part of the first
  // wave, F1 > 0. F2 can still vanish when a stayer lies below the
  // refreshment sample.
  const double r2 = F2 > 0.0 ? p * F2w / F2 : std::numeric_limits<double>::infinity();
  const double k1 = clamped_inverse(link, p * F1w / F1, clamp_events);
  const double k2 = clamped_inverse(link, r2, clamp_events);
  const double k0 = clamped_inverse(link, p, clamp_events);
  return p * Fw / link.forward(k1 + k2 - k0);
}

CorrectedCdf::CorrectedCdf(double p_hat, Ecdf f1, Ecdf f2, Ecdf f1w, Ecdf f2w, Ecdf fw, LinkFunction link)
    : p_hat_(p_hat),
      f1_(std::move(f1)),
      f2_(std::move(f2)),
      f1w_(std::move(f1w)),
      f2w_(std::move(f2w)),
      fw_(std::move(fw)),
      link_(std::move(link)) {}

CorrectedCdf build_corrected_cdf(const ValidatedData& data, const LinkFunction& link) {
  if (data.n2 == 0) throw InputError("no stayers: the balanced panel is empty");
  const double p_hat = static_cast<double>(data.n2) / static_cast<double>(data.n1);
  return CorrectedCdf(p_hat, Ecdf(data.first_wave()), Ecdf(data.refreshment.rows), Ecdf(data.stayers_z1()),
                      Ecdf(data.stayers_z2()), Ecdf(data.stayers_joint()), link);
}

namespace {

std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

double eval_corrected(const CorrectedCdf& f, std::span<const double> z1, std::span<const double> z2,
                      std::size_t* clamp_events) {
  const double F1 = f.f1().eval(z1);
  const double F2 = f.f2().eval(z2);
  check_support(F1, "F1");
  check_support(F2, "F2");
  return phi(f.p_hat(), F1, F2, f.f1w().eval(z1), f.f2w().eval(z2), f.fw().eval(concat(z1, z2)), f.link(),
             clamp_events);
}

double eval_corrected_extended(const CorrectedCdf& f, std::span<const double> z1, std::span<const double> z2,
                               std::size_t* clamp_events) {
  return phi_extended(f.p_hat(), f.f1().eval(z1), f.f2().eval(z2), f.f1w().eval(z1), f.f2w().eval(z2),
                      f.fw().eval(concat(z1, z2)), f.link(), clamp_events);
}

double k1_hat(const CorrectedCdf& f, std::span<const double> z1, std::size_t* clamp_events) {
  const double F1 = f.f1().eval(z1);
  check_support(F1, "F1");
  return clamped_inverse(f.link(), f.p_hat() * f.f1w().eval(z1) / F1, clamp_events);
}

double k2_hat(const CorrectedCdf& f, std::span<const double> z2, std::size_t* clamp_events) {
  const double F2 = f.f2().eval(z2);
  check_support(F2, "F2");
  return clamped_inverse(f.link(), f.p_hat() * f.f2w().eval(z2) / F2, clamp_events) -
         clamped_inverse(f.link(), f.p_hat(), clamp_events);
}

}  // namespace cfpanel
