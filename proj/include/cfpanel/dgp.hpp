#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "cfpanel/dataio.hpp"
#include "cfpanel/link.hpp"
#include "cfpanel/measure.hpp"
#include "cfpanel/rng.hpp"

namespace cfpanel {

// ---- Gumbel copula -------------------------------------------------------

// exp(-((-log u)^nu + (-log v)^nu)^(1/nu)); zero when u or v is zero.
double gumbel_copula_cdf(double u, double v, double nu);

// Frailty construction: V positive stable with index 1/nu, then
// U = exp(-(E1/V)^(1/nu)) and likewise for the second margin.
std::pair<double, double> sample_copula_pair(double nu, Rng& rng);

// Kendall's tau-a by merge-sort inversion counting, O(n log n).
double kendall_tau(std::span<const double> x, std::span<const double> y);

// ---- finite-support designs ---------------------------------------------

// Joint law of (z1, z2) on a product lattice with a stay probability per
// cell. Cells are indexed row-major over the 2d axes.
struct LatticeDgp {
  std::size_t d = 0;
  std::vector<std::vector<double>> axes;  // 2d sorted value lists
  std::vector<double> pmf;                // population law
  std::vector<double> stay;               // P(W = 1 | Z = cell); 0 where pmf is 0
  double stay_rate = 0.0;

  std::size_t cells() const { return pmf.size(); }
  std::vector<double> point(std::size_t cell) const;
  // Atoms with positive population mass, weighted by it.
  SignedMeasure population_measure() const;
  // The stayers' law: pmf * stay, normalized.
  SignedMeasure stayer_measure() const;
};

using LatticeIndexFn = std::function<double(std::span<const double> z)>;

// Forward construction: H = G(k(z)) F(z) differenced over cells, divided by
// the cell mass. Throws DomainError when a stay probability falls outside
// [-1e-9, 1 + 1e-9].
LatticeDgp lattice_forward(std::size_t d, std::vector<std::vector<double>> axes, std::vector<double> pmf,
                           const LatticeIndexFn& k, const LinkFunction& link);

// Reverse construction from the stayers' law fw: F = p Fw / G(k(z)) with
// G(k(top)) = p, and stay = p fw / f. Throws DomainError when F is not a
// distribution function.
LatticeDgp lattice_reverse(std::size_t d, std::vector<std::vector<double>> axes, std::vector<double> fw,
                           const LatticeIndexFn& k, const LinkFunction& link);

// Scalar Markov design on {1..m}: uniform initial law, k = a + c1 z1 + c2 z2.
struct DiscreteDgpSpec {
  std::size_t m = 5;
  std::vector<std::vector<double>> transition;
  double c1 = 0.0;
  double c2 = 0.0;
  double intercept = 0.0;
  LinkFunction link = LinkFunction::logit();
};

// Diagonal `stay_diag`, off-diagonal entries (1 - stay_diag)/(m - 1).
std::vector<std::vector<double>> banded_transition(std::size_t m, double stay_diag);
void check_spec(const DiscreteDgpSpec& spec);
LatticeDgp build_lattice(const DiscreteDgpSpec& spec);

// Two-period panel with one regressor x in {0,1,2} and outcome y in {0..7}
// per period: y_t = alpha + t + 2 x_t + e_t with alpha, e_t in {0,1}. The
// stayers follow this law; the population is recovered by the reverse
// construction with k = a + c1 y1 + c2 y2.
struct FeDgpSpec {
  double c1 = -0.1;
  double c2 = -0.1;
  double stay_rate = 0.6;
  LinkFunction link = LinkFunction::logit();
};
LatticeDgp build_lattice(const FeDgpSpec& spec);

// ---- continuous design ---------------------------------------------------

// z1 = (u, x), z2 = (v, y) with (u, v) from the Gumbel copula and x, y
// exponential. k1 = a + c1 u min(x, cap1), k2 = c2 v min(y, cap2) where cap
// is the `cap_quantile` quantile of the exponential margin.
struct CopulaDgpSpec {
  double nu = 2.0;
  double mu1 = 1.0;
  double mu2 = 1.0;
  double c1 = 0.03;
  double c2 = 0.03;
  double intercept = 0.0;
  double cap_quantile = 0.99;
  LinkFunction link = LinkFunction::logit();
};

void check_spec(const CopulaDgpSpec& spec);

// Intercept-free pieces of the pointwise stay probability at one point:
// stay(a) = sum_n G^(n)(a + base_k) moment[n] / n! / density.
struct StayTerms {
  double base_k = 0.0;
  std::array<double, 5> moment{};
  double density = 0.0;
};
StayTerms stay_terms(const CopulaDgpSpec& spec, double u, double x, double v, double y);
// Unclipped stay probability for intercept `a`.
double raw_stay_probability(const CopulaDgpSpec& spec, const StayTerms& t, double a);
// Clipped into [0, 1]; a non-finite value falls back to G(a + base_k).
double stay_probability(const CopulaDgpSpec& spec, const StayTerms& t, double a);
// Overall stay rate without clipping: G(k1 + k2) at the top corner.
double unclipped_stay_rate(const CopulaDgpSpec& spec);

// ---- shared operations ---------------------------------------------------

using DgpSpec = std::variant<DiscreteDgpSpec, CopulaDgpSpec, FeDgpSpec>;

std::size_t period_dim(const DgpSpec& spec);

struct CalibrationResult {
  double intercept = 0.0;
  double stay_rate = 0.0;        // implied rate at the calibrated intercept
  double unclipped_rate = 0.0;   // continuous design: rate before clipping
  double clipped_mass = 0.0;     // continuous design: mean |stay - clip(stay)|
  std::size_t iterations = 0;
};

// Bisection on the intercept until the implied attrition rate is within
// `tol` of `target_attrition`. The discrete rate is exact; the continuous
// rate averages the clipped stay probability over `draws` points drawn from
// the stream (seed, Calibration, 0). Throws DomainError when the target is
// out of reach or the calibrated design is invalid.
CalibrationResult calibrate_attrition(DiscreteDgpSpec& spec, double target_attrition, double tol = 1e-4);
CalibrationResult calibrate_attrition(CopulaDgpSpec& spec, double target_attrition, double tol = 1e-4,
                                      std::size_t draws = 1'000'000, std::uint64_t seed = 0);

struct SimulatedStudy {
  PanelDataset panel;
  RefreshmentDataset refreshment;
  double theta_true = 0.0;
  double attrition_rate = 0.0;

  ValidatedData validated() const;
};

// Panel and refreshment rows come from the streams (seed, Simulate, 0) and
// (seed, Simulate, 1) below `rng_path`.
SimulatedStudy simulate(const DgpSpec& spec, std::size_t n1, std::size_t nr, std::uint64_t seed,
                        std::uint64_t rng_path = 0);

// Target of each design: P(Z2 = 1 | Z1 = 1) for the discrete design,
// E[Z11 Z21] for the copula design (quasi-random quadrature, standard error
// in `std_error`), and the population two-way FE slope for the FE design.
double true_theta(const DgpSpec& spec, double* std_error = nullptr);

}  // namespace cfpanel
