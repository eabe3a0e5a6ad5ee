#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfpanel/dataio.hpp"
#include "cfpanel/link.hpp"
#include "cfpanel/measure.hpp"

namespace cfpanel {

// m(z, theta) = a(z) - B(z) theta, with B stored row-major (k x k).
struct LinearDecomposition {
  std::function<void(std::span<const double> z, std::span<double> a)> a;
  std::function<void(std::span<const double> z, std::span<double> B)> B;
};

// Exactly identified moment function on 2d-vectors z = (z1, z2).
struct MomentModel {
  std::string name;
  std::size_t dim_theta = 0;
  std::size_t dim_z = 0;  // 2d
  std::function<void(std::span<const double> z, std::span<const double> theta, std::span<double> out)>
      evaluate;
  std::optional<LinearDecomposition> linear;
  // d m / d theta at (z, theta), row-major k x k. Newton uses it when present.
  std::function<void(std::span<const double> z, std::span<const double> theta, std::span<double> jac)>
      jacobian;
  // Coordinates of z the model reads; empty means all of them.
  std::vector<std::size_t> coordinates;
};

// m = z[index] - theta.
MomentModel mean_model(std::size_t dim_z, std::size_t index);
// m = z[i] * z[j] - theta.
MomentModel product_moment_model(std::size_t dim_z, std::size_t i, std::size_t j);
// m = 1(z1[0] = b) (1(z2[0] = a) - theta), i.e. P(Z2 = a | Z1 = b).
MomentModel cond_prob_model(std::size_t d, double a, double b);
// Two-period within regression of y on x. Each period block holds the
// regressors at `x_indices` and the outcome at `y_index`. theta stacks the
// mean first differences (x then y) followed by the slopes.
MomentModel twoway_fe_model(std::size_t d, std::vector<std::size_t> x_indices, std::size_t y_index);
// Slope components of a twoway_fe_model parameter vector.
std::vector<double> twoway_fe_slopes(const MomentModel& model, std::span<const double> theta);

// Within-period positions read by the model (its coordinates modulo d),
// sorted; all positions when the model does not declare its coordinates.
std::vector<std::size_t> used_positions(const MomentModel& model, std::size_t d);
// Data restricted to the given within-period positions in both periods.
ValidatedData project_periods(const ValidatedData& data, std::span<const std::size_t> positions);
// The model re-indexed for data projected onto `positions`.
MomentModel project_model(const MomentModel& model, std::size_t d, std::span<const std::size_t> positions);

enum class SolveMethod { kLinear, kNewton, kSimplex };
std::string to_string(SolveMethod m);

struct EstimateResult {
  std::vector<double> theta_hat;
  double residual_norm = 0.0;  // sup norm of the integrated moments
  std::size_t solver_iterations = 0;
  double total_mass = 0.0;
  double negative_mass = 0.0;
  std::size_t clamp_events = 0;
  SolveMethod method = SolveMethod::kLinear;
  bool converged = false;
  MeasureDiagnostics diagnostics;
};

// Throws NumericalError on a singular integrated Jacobian in the linear
// path. Non-convergence is reported through `converged`, with the best
// point found.
EstimateResult solve_gmm(const SignedMeasure& mu, const MomentModel& model, std::span<const double> theta0,
                         double tol = 1e-10, std::size_t max_iter = 100);

struct EstimateOptions {
  GridStrategy grid = GridStrategy::kPaperTuples;
  double tol = 1e-10;
  std::size_t max_iter = 100;
  int threads = 1;
  double h_scale = 1.0;
  std::optional<std::vector<double>> theta0;  // default: the naive estimate
};

// Under the full-product grid the jump measure of a model that reads only
// some within-period positions is computed on the data projected onto those
// positions: summing the full-product weights over the unused coordinates
// telescopes to evaluating the corrected CDF at +infinity there, so the
// projection is exact for such models.
SignedMeasure corrected_measure(const ValidatedData& data, const LinkFunction& link, const EstimateOptions& opts);
EstimateResult estimate_corrected(const ValidatedData& data, const LinkFunction& link, const MomentModel& model,
                                  const EstimateOptions& opts = {});
EstimateResult estimate_naive(const ValidatedData& data, const MomentModel& model,
                              const EstimateOptions& opts = {});

// Closed-form two-way fixed-effects slope under `mu`: unit and time
// demeaning of both periods, then the normal equations. Atoms are summed in
// a canonical order, so the result does not depend on atom order.
// Throws DomainError on a singular demeaned design.
std::vector<double> twoway_fe_estimand(const AtomView& mu, std::size_t d, std::span<const std::size_t> x_indices,
                                       std::size_t y_index);

}  // namespace cfpanel
