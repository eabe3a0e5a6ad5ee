#pragma once

#include <cstddef>
#include <span>

#include "cfpanel/dataio.hpp"
#include "cfpanel/ecdf.hpp"
#include "cfpanel/link.hpp"

namespace cfpanel {

// p*Fw / G(G^-1(p*F1w/F1) + G^-1(p*F2w/F2) - G^-1(p)), every G^-1 argument
// clamped into the link's range. Requires F1 > 0 and F2 > 0.
double phi(double p, double F1, double F2, double F1w, double F2w, double Fw,
           const LinkFunction& link, std::size_t* clamp_events = nullptr);

// Same map extended to the boundary of the supports: 0 when Fw == 0, and a
// zero F2 with positive F2w is an infinite ratio clamped to the top of the
// range. Used for the jump-measure corners just below the observed data.
double phi_extended(double p, double F1, double F2, double F1w, double F2w, double Fw,
                    const LinkFunction& link, std::size_t* clamp_events = nullptr);

// Plug-in corrected CDF built from the first wave (f1), the refreshment
// sample (f2) and the stayers (f1w, f2w, fw). Immutable.
class CorrectedCdf {
 public:
  CorrectedCdf(double p_hat, Ecdf f1, Ecdf f2, Ecdf f1w, Ecdf f2w, Ecdf fw, LinkFunction link);

  double p_hat() const { return p_hat_; }
  std::size_t dim() const { return f1_.dim(); }
  const Ecdf& f1() const { return f1_; }
  const Ecdf& f2() const { return f2_; }
  const Ecdf& f1w() const { return f1w_; }
  const Ecdf& f2w() const { return f2w_; }
  const Ecdf& fw() const { return fw_; }
  const LinkFunction& link() const { return link_; }

 private:
  double p_hat_;
  Ecdf f1_, f2_, f1w_, f2w_, fw_;
  LinkFunction link_;
};

// Throws InputError("no stayers") when n2 = 0.
CorrectedCdf build_corrected_cdf(const ValidatedData& data, const LinkFunction& link);

// Throws DomainError when z1 lies below every first-wave point or z2 below
// every refreshment point.
double eval_corrected(const CorrectedCdf& f, std::span<const double> z1, std::span<const double> z2,
                      std::size_t* clamp_events = nullptr);
double eval_corrected_extended(const CorrectedCdf& f, std::span<const double> z1,
                               std::span<const double> z2, std::size_t* clamp_events = nullptr);

// Attrition components under the normalization k2(+inf) = 0.
double k1_hat(const CorrectedCdf& f, std::span<const double> z1, std::size_t* clamp_events = nullptr);
double k2_hat(const CorrectedCdf& f, std::span<const double> z2, std::size_t* clamp_events = nullptr);

}  // namespace cfpanel
