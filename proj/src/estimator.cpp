#include "cfpanel/estimator.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cfpanel/error.hpp"
#include "cfpanel/numeric.hpp"

namespace cfpanel {

namespace {

void check_index(std::size_t dim_z, std::size_t index, const char* what) {
  if (index >= dim_z) {
    throw InputError(std::string(what) + " index " + std::to_string(index) + " out of range for " +
                     std::to_string(dim_z) + "-dimensional observations");
  }
}

}  // namespace

MomentModel mean_model(std::size_t dim_z, std::size_t index) {
  check_index(dim_z, index, "mean model");
  MomentModel m;
  m.name = "mean";
  m.dim_theta = 1;
  m.dim_z = dim_z;
  m.evaluate = [index](std::span<const double> z, std::span<const double> th, std::span<double> out) {
    out[0] = z[index] - th[0];
  };
  m.linear = LinearDecomposition{
      [index](std::span<const double> z, std::span<double> a) { a[0] = z[index]; },
      [](std::span<const double>, std::span<double> B) { B[0] = 1.0; }};
  m.coordinates = {index};
  return m;
}

MomentModel product_moment_model(std::size_t dim_z, std::size_t i, std::size_t j) {
  check_index(dim_z, i, "product-moment");
  check_index(dim_z, j, "product-moment");
  MomentModel m;
  m.name = "product-moment";
  m.dim_theta = 1;
  m.dim_z = dim_z;
  m.evaluate = [i, j](std::span<const double> z, std::span<const double> th, std::span<double> out) {
    out[0] = z[i] * z[j] - th[0];
  };
  m.linear = LinearDecomposition{
      [i, j](std::span<const double> z, std::span<double> a) { a[0] = z[i] * z[j]; },
      [](std::span<const double>, std::span<double> B) { B[0] = 1.0; }};
  m.coordinates = {i, j};
  return m;
}

MomentModel cond_prob_model(std::size_t d, double a, double b) {
  if (d == 0) throw InputError("cond-prob model needs d >= 1");
  MomentModel m;
  m.name = "cond-prob";
  m.dim_theta = 1;
  m.dim_z = 2 * d;
  m.evaluate = [d, a, b](std::span<const double> z, std::span<const double> th, std::span<double> out) {
    const double in1 = z[0] == b ? 1.0 : 0.0;
    const double in2 = z[d] == a ? 1.0 : 0.0;
    out[0] = in1 * (in2 - th[0]);
  };
  m.linear = LinearDecomposition{
      [d, a, b](std::span<const double> z, std::span<double> out) {
        out[0] = (z[0] == b && z[d] == a) ? 1.0 : 0.0;
      },
      [b](std::span<const double> z, std::span<double> B) { B[0] = z[0] == b ? 1.0 : 0.0; }};
  m.coordinates = {0, d};
  return m;
}

MomentModel twoway_fe_model(std::size_t d, std::vector<std::size_t> x_indices, std::size_t y_index) {
  if (x_indices.empty()) throw InputError("twoway-fe model needs at least one regressor");
  for (std::size_t xi : x_indices) check_index(d, xi, "twoway-fe regressor");
  check_index(d, y_index, "twoway-fe outcome");
  const std::size_t k = x_indices.size();
  MomentModel m;
  m.name = "twoway-fe";
  m.dim_theta = 2 * k + 1;
  m.dim_z = 2 * d;
  // theta = (mu_x[0..k), mu_y, beta[0..k)); ex = dx - mu_x, ey = dy - mu_y.
  auto residuals = [d, x_indices, y_index, k](std::span<const double> z, std::span<const double> th,
                                              std::vector<double>& ex, double& ey, double& r) {
    ex.resize(k);
    r = 0.0;
    ey = (z[d + y_index] - z[y_index]) - th[k];
    for (std::size_t j = 0; j < k; ++j) ex[j] = (z[d + x_indices[j]] - z[x_indices[j]]) - th[j];
    r = ey;
    for (std::size_t j = 0; j < k; ++j) r -= ex[j] * th[k + 1 + j];
  };
  m.evaluate = [residuals, k](std::span<const double> z, std::span<const double> th, std::span<double> out) {
    thread_local std::vector<double> ex;
    double ey = 0.0, r = 0.0;
    residuals(z, th, ex, ey, r);
    for (std::size_t j = 0; j < k; ++j) out[j] = ex[j];
    out[k] = ey;
    for (std::size_t j = 0; j < k; ++j) out[k + 1 + j] = ex[j] * r;
  };
  m.jacobian = [residuals, k](std::span<const double> z, std::span<const double> th, std::span<double> jac) {
    thread_local std::vector<double> ex;
    double ey = 0.0, r = 0.0;
    residuals(z, th, ex, ey, r);
    const std::size_t p = 2 * k + 1;
    std::fill(jac.begin(), jac.end(), 0.0);
    for (std::size_t j = 0; j < k; ++j) jac[j * p + j] = -1.0;
    jac[k * p + k] = -1.0;
    for (std::size_t j = 0; j < k; ++j) {
      double* row = jac.data() + (k + 1 + j) * p;
      for (std::size_t i = 0; i < k; ++i) {
        row[i] = ex[j] * th[k + 1 + i] - (i == j ? r : 0.0);
        row[k + 1 + i] = -ex[j] * ex[i];
      }
      row[k] = -ex[j];
    }
  };
  for (std::size_t xi : x_indices) {
    m.coordinates.push_back(xi);
    m.coordinates.push_back(d + xi);
  }
  m.coordinates.push_back(y_index);
  m.coordinates.push_back(d + y_index);
  return m;
}

std::vector<double> twoway_fe_slopes(const MomentModel& model, std::span<const double> theta) {
  if (model.name != "twoway-fe") throw InputError("not a twoway-fe model");
  const std::size_t k = (model.dim_theta - 1) / 2;
  return {theta.begin() + static_cast<std::ptrdiff_t>(k + 1), theta.end()};
}

std::vector<std::size_t> used_positions(const MomentModel& model, std::size_t d) {
  std::vector<std::size_t> pos;
  if (model.coordinates.empty()) {
    for (std::size_t k = 0; k < d; ++k) pos.push_back(k);
    return pos;
  }
  for (std::size_t c : model.coordinates) pos.push_back(c % d);
  std::sort(pos.begin(), pos.end());
  pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
  return pos;
}

ValidatedData project_periods(const ValidatedData& data, std::span<const std::size_t> positions) {
  for (std::size_t p : positions) check_index(data.dim, p, "projection");
  auto pick = [&](std::span<const double> z) {
    std::vector<double> out;
    for (std::size_t p : positions) out.push_back(z[p]);
    return out;
  };
  ValidatedData out = data;
  out.dim = positions.size();
  out.panel.dim = positions.size();
  for (auto& u : out.panel.units) {
    u.z1 = pick(u.z1);
    if (u.z2) u.z2 = pick(*u.z2);
  }
  out.refreshment.rows = PointSet(positions.size());
  out.refreshment.rows.reserve(data.refreshment.rows.size());
  for (std::size_t i = 0; i < data.refreshment.rows.size(); ++i) {
    out.refreshment.rows.push_back(pick(data.refreshment.rows[i]));
  }
  return out;
}

MomentModel project_model(const MomentModel& model, std::size_t d, std::span<const std::size_t> positions) {
  const std::size_t dp = positions.size();
  // Slot of projected coordinate q in the full vector.
  std::vector<std::size_t> slot(2 * dp);
  for (std::size_t q = 0; q < dp; ++q) {
    slot[q] = positions[q];
    slot[dp + q] = d + positions[q];
  }
  auto expand = [slot, d](std::span<const double> zp) -> std::span<const double> {
    thread_local std::vector<double> z;
    z.assign(2 * d, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t q = 0; q < slot.size(); ++q) z[slot[q]] = zp[q];
    return z;
  };
  MomentModel p = model;
  p.dim_z = 2 * dp;
  p.evaluate = [f = model.evaluate, expand](std::span<const double> z, std::span<const double> th,
                                            std::span<double> out) { f(expand(z), th, out); };
  if (model.jacobian) {
    p.jacobian = [f = model.jacobian, expand](std::span<const double> z, std::span<const double> th,
                                              std::span<double> out) { f(expand(z), th, out); };
  }
  if (model.linear) {
    p.linear = LinearDecomposition{
        [f = model.linear->a, expand](std::span<const double> z, std::span<double> out) { f(expand(z), out); },
        [f = model.linear->B, expand](std::span<const double> z, std::span<double> out) { f(expand(z), out); }};
  }
  p.coordinates.clear();
  for (std::size_t c : model.coordinates) {
    const std::size_t q = static_cast<std::size_t>(
        std::find(positions.begin(), positions.end(), c % d) - positions.begin());
    p.coordinates.push_back(c < d ? q : dp + q);
  }
  return p;
}

std::string to_string(SolveMethod m) {
  switch (m) {
    case SolveMethod::kLinear: return "linear";
    case SolveMethod::kNewton: return "newton";
    case SolveMethod::kSimplex: return "simplex";
  }
  return "unknown";
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double sup_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

class MomentSystem {
 public:
  MomentSystem(const SignedMeasure& mu, const MomentModel& model) : mu_(mu), model_(model), k_(model.dim_theta) {
    if (mu.dim() != model.dim_z) {
      throw InputError("model '" + model.name + "' expects " + std::to_string(model.dim_z) +
                       "-dimensional observations, measure has " + std::to_string(mu.dim()));
    }
  }

  VectorXd moments(const VectorXd& theta) const {
    std::span<const double> th(theta.data(), k_);
    const auto out = integrate(
        mu_.view(), [&](std::span<const double> z, std::span<double> o) { model_.evaluate(z, th, o); }, k_);
    return Eigen::Map<const VectorXd>(out.data(), static_cast<Eigen::Index>(k_));
  }

  MatrixXd jacobian(const VectorXd& theta, const VectorXd& m_at) const {
    MatrixXd J(k_, k_);
    if (model_.jacobian) {
      std::span<const double> th(theta.data(), k_);
      const auto out = integrate(
          mu_.view(), [&](std::span<const double> z, std::span<double> o) { model_.jacobian(z, th, o); },
          k_ * k_);
      for (std::size_t r = 0; r < k_; ++r)
        for (std::size_t c = 0; c < k_; ++c) J(r, c) = out[r * k_ + c];
      return J;
    }
    for (std::size_t j = 0; j < k_; ++j) {
      VectorXd shifted = theta;
      const double step = std::max(1e-6, 1e-6 * std::abs(theta[j]));
      shifted[j] += step;
      J.col(j) = (moments(shifted) - m_at) / step;
    }
    return J;
  }

  std::size_t k() const { return k_; }
  const SignedMeasure& measure() const { return mu_; }
  const MomentModel& model() const { return model_; }

 private:
  const SignedMeasure& mu_;
  const MomentModel& model_;
  std::size_t k_;
};

struct Attempt {
  VectorXd theta;
  double residual = std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  bool converged = false;
};

Attempt solve_linear(const MomentSystem& sys, double tol) {
  const std::size_t k = sys.k();
  const auto& lin = *sys.model().linear;
  const auto sums = integrate(
      sys.measure().view(),
      [&](std::span<const double> z, std::span<double> o) {
        lin.a(z, o.first(k));
        lin.B(z, o.subspan(k, k * k));
      },
      k + k * k);
  VectorXd b(k);
  MatrixXd A(k, k);
  for (std::size_t r = 0; r < k; ++r) {
    b[r] = sums[r];
    for (std::size_t c = 0; c < k; ++c) A(r, c) = sums[k + r * k + c];
  }
  Eigen::FullPivLU<MatrixXd> lu(A);
  if (lu.rank() < static_cast<Eigen::Index>(k)) throw NumericalError("singular integrated Jacobian");
  Attempt at;
  at.theta = lu.solve(b);
  at.iterations = 1;
  VectorXd m = sys.moments(at.theta);
  at.residual = sup_norm(m);
  // Iterative refinement against the exact moments.
  for (int r = 0; r < 3 && at.residual > tol; ++r) {
    const VectorXd cand = at.theta + lu.solve(m);
    const VectorXd mc = sys.moments(cand);
    ++at.iterations;
    if (!(sup_norm(mc) < at.residual)) break;
    at.theta = cand;
    m = mc;
    at.residual = sup_norm(m);
  }
  at.converged = at.residual <= tol;
  return at;
}

// Moments at theta, or NaN when the model is undefined there.
VectorXd safe_moments(const MomentSystem& sys, const VectorXd& theta) {
  try {
    return sys.moments(theta);
  } catch (const DomainError&) {
    return VectorXd::Constant(static_cast<Eigen::Index>(sys.k()), std::numeric_limits<double>::quiet_NaN());
  }
}

Attempt solve_newton(const MomentSystem& sys, const VectorXd& theta0, double tol, std::size_t max_iter) {
  Attempt at;
  at.theta = theta0;
  VectorXd m = safe_moments(sys, theta0);
  if (!m.allFinite()) return at;
  at.residual = sup_norm(m);
  while (at.iterations < max_iter && at.residual > tol) {
    ++at.iterations;
    const MatrixXd J = sys.jacobian(at.theta, m);
    Eigen::FullPivLU<MatrixXd> lu(J);
    if (lu.rank() < static_cast<Eigen::Index>(sys.k())) break;
    const VectorXd delta = lu.solve(-m);
    if (!delta.allFinite()) break;
    bool accepted = false;
    double step = 1.0;
    const double current = m.squaredNorm();
    for (int h = 0; h < 40; ++h, step *= 0.5) {
      const VectorXd cand = at.theta + step * delta;
      const VectorXd mc = safe_moments(sys, cand);
      if (mc.allFinite() && mc.squaredNorm() < current) {
        at.theta = cand;
        m = mc;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    at.residual = sup_norm(m);
  }
  at.converged = at.residual <= tol;
  return at;
}

struct SimplexContext {
  const MomentSystem* sys;
};

double simplex_objective(const gsl_vector* x, void* params) {
  const auto* ctx = static_cast<const SimplexContext*>(params);
  VectorXd theta(ctx->sys->k());
  for (std::size_t j = 0; j < ctx->sys->k(); ++j) theta[j] = gsl_vector_get(x, j);
  const VectorXd m = safe_moments(*ctx->sys, theta);
  if (!m.allFinite()) return 1e300;
  return m.squaredNorm();
}

Attempt solve_simplex(const MomentSystem& sys, const VectorXd& theta0, double tol, std::size_t max_iter) {
  const std::size_t k = sys.k();
  SimplexContext ctx{&sys};
  gsl_multimin_function fn{&simplex_objective, k, &ctx};
  gsl_vector* x = gsl_vector_alloc(k);
  gsl_vector* steps = gsl_vector_alloc(k);
  for (std::size_t j = 0; j < k; ++j) {
    gsl_vector_set(x, j, theta0[j]);
    gsl_vector_set(steps, j, 0.1 * std::max(1.0, std::abs(theta0[j])));
  }
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, k);
  gsl_multimin_fminimizer_set(s, &fn, x, steps);
  Attempt at;
  at.theta = theta0;
  const std::size_t cap = std::max<std::size_t>(max_iter * 100, 1000);
  for (at.iterations = 0; at.iterations < cap; ++at.iterations) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    if (std::sqrt(std::max(s->fval, 0.0)) <= tol) break;
    if (gsl_multimin_fminimizer_size(s) < 1e-15) break;
  }
  for (std::size_t j = 0; j < k; ++j) at.theta[j] = gsl_vector_get(s->x, j);
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(steps);
  gsl_vector_free(x);
  const VectorXd m = safe_moments(sys, at.theta);
  at.residual = m.allFinite() ? sup_norm(m) : std::numeric_limits<double>::infinity();
  at.converged = at.residual <= tol;
  return at;
}

void fill_from_measure(EstimateResult& r, const SignedMeasure& mu) {
  r.total_mass = mu.total_mass();
  r.negative_mass = mu.negative_mass();
  r.clamp_events = mu.diagnostics.clamp_events;
  r.diagnostics = mu.diagnostics;
}

}  // namespace

EstimateResult solve_gmm(const SignedMeasure& mu, const MomentModel& model, std::span<const double> theta0,
                         double tol, std::size_t max_iter) {
  if (!(tol > 0.0)) throw InputError("solver tolerance must be positive");
  if (theta0.size() != model.dim_theta) throw InputError("theta0 has the wrong dimension");
  for (double t : theta0) {
    if (!std::isfinite(t)) throw InputError("theta0 must be finite");
  }
  const MomentSystem sys(mu, model);
  EstimateResult result;
  fill_from_measure(result, mu);
  Attempt at;
  if (model.linear) {
    at = solve_linear(sys, tol);
    result.method = SolveMethod::kLinear;
  } else {
    const VectorXd start = Eigen::Map<const VectorXd>(theta0.data(), static_cast<Eigen::Index>(theta0.size()));
    at = solve_newton(sys, start, tol, max_iter);
    result.method = SolveMethod::kNewton;
    if (!at.converged) {
      const VectorXd from = at.residual < std::numeric_limits<double>::infinity() ? at.theta : start;
      Attempt fallback = solve_simplex(sys, from, tol, max_iter);
      fallback.iterations += at.iterations;
      if (fallback.residual < at.residual || !std::isfinite(at.residual)) {
        at = fallback;
        result.method = SolveMethod::kSimplex;
      } else {
        at.iterations = fallback.iterations;
      }
    }
    if (at.converged) {
      // a root where the moments are flat in some direction is not a point estimate
      // central differences: independent of any model-supplied jacobian
      const std::size_t k = sys.k();
      MatrixXd J(safe_moments(sys, at.theta).size(), k);
      for (std::size_t j = 0; j < k; ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(at.theta[j]));
        VectorXd up = at.theta, down = at.theta;
        up[j] += h;
        down[j] -= h;
        J.col(j) = (safe_moments(sys, up) - safe_moments(sys, down)) / (2 * h);
      }
      Eigen::FullPivLU<MatrixXd> lu(J);
      lu.setThreshold(1e-7);
      if (!J.allFinite() || lu.rank() < static_cast<Eigen::Index>(k)) {
        throw NumericalError("parameter not identified: moment Jacobian is singular at the solution");
      }
    }
  }
  result.theta_hat.assign(at.theta.data(), at.theta.data() + at.theta.size());
  result.residual_norm = at.residual;
  result.solver_iterations = at.iterations;
  result.converged = at.converged;
  return result;
}

SignedMeasure corrected_measure(const ValidatedData& data, const LinkFunction& link, const EstimateOptions& opts) {
  const CorrectedCdf f = build_corrected_cdf(data, link);
  JumpGrid grid = build_grid(data, opts.grid);
  if (opts.h_scale != 1.0) grid = scale_h(std::move(grid), opts.h_scale);
  JumpOptions jo;
  jo.threads = opts.threads;
  return jump_masses(f, grid, jo);
}

EstimateResult estimate_naive(const ValidatedData& data, const MomentModel& model, const EstimateOptions& opts) {
  if (data.n2 == 0) throw InputError("no stayers: the balanced panel is empty");
  const SignedMeasure mu = SignedMeasure::uniform(data.stayers_joint());
  const std::vector<double> start = opts.theta0.value_or(std::vector<double>(model.dim_theta, 0.0));
  return solve_gmm(mu, model, start, opts.tol, opts.max_iter);
}

EstimateResult estimate_corrected(const ValidatedData& data, const LinkFunction& link, const MomentModel& model,
                                  const EstimateOptions& opts) {
  if (opts.grid == GridStrategy::kFullProduct && data.dim > 1) {
    const auto positions = used_positions(model, data.dim);
    if (positions.size() < data.dim) {
      EstimateOptions inner = opts;
      if (!inner.theta0 && !model.linear) {
        const EstimateResult naive = estimate_naive(data, model, opts);
        if (naive.converged) inner.theta0 = naive.theta_hat;
      }
      return estimate_corrected(project_periods(data, positions), link,
                                project_model(model, data.dim, positions), inner);
    }
  }
  const SignedMeasure mu = corrected_measure(data, link, opts);
  std::vector<double> start;
  if (opts.theta0) {
    start = *opts.theta0;
  } else if (model.linear) {
    start.assign(model.dim_theta, 0.0);
  } else {
    const EstimateResult naive = estimate_naive(data, model, opts);
    start = naive.converged ? naive.theta_hat : std::vector<double>(model.dim_theta, 0.0);
  }
  return solve_gmm(mu, model, start, opts.tol, opts.max_iter);
}

std::vector<double> twoway_fe_estimand(const AtomView& mu, std::size_t d, std::span<const std::size_t> x_indices,
                                       std::size_t y_index) {
  if (mu.dim != 2 * d) throw InputError("measure dimension does not match 2d");
  const std::size_t k = x_indices.size();
  if (k == 0) throw InputError("twoway-fe needs at least one regressor");
  for (std::size_t xi : x_indices) check_index(d, xi, "twoway-fe regressor");
  check_index(d, y_index, "twoway-fe outcome");

  std::vector<std::size_t> order(mu.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto pa = mu.point(a), pb = mu.point(b);
    if (std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end())) return true;
    if (std::lexicographical_compare(pb.begin(), pb.end(), pa.begin(), pa.end())) return false;
    return mu.weights[a] < mu.weights[b];
  });

  // Unit-demeaned value of variable at coordinate c in period t (0 or 1).
  auto unit_demeaned = [d](std::span<const double> z, std::size_t c, int t) {
    const double mean = 0.5 * (z[c] + z[d + c]);
    return z[t * d + c] - mean;
  };

  std::vector<std::size_t> vars(x_indices.begin(), x_indices.end());
  vars.push_back(y_index);
  const std::size_t nv = vars.size();
  CompensatedSum total;
  std::vector<CompensatedSum> time_sum(2 * nv);
  for (std::size_t i : order) {
    const auto z = mu.point(i);
    const double w = mu.weights[i];
    total.add(w);
    for (int t = 0; t < 2; ++t)
      for (std::size_t v = 0; v < nv; ++v) time_sum[t * nv + v].add(w * unit_demeaned(z, vars[v], t));
  }
  const double mass = total.value();
  if (!(std::abs(mass) > 0.0)) throw DomainError("measure has zero total mass");
  std::vector<double> time_mean(2 * nv);
  for (std::size_t q = 0; q < 2 * nv; ++q) time_mean[q] = time_sum[q].value() / mass;

  std::vector<CompensatedSum> xx(k * k), xy(k);
  std::vector<double> dd(nv);
  for (std::size_t i : order) {
    const auto z = mu.point(i);
    const double w = mu.weights[i];
    for (int t = 0; t < 2; ++t) {
      for (std::size_t v = 0; v < nv; ++v) dd[v] = unit_demeaned(z, vars[v], t) - time_mean[t * nv + v];
      for (std::size_t r = 0; r < k; ++r) {
        for (std::size_t c = 0; c < k; ++c) xx[r * k + c].add(w * dd[r] * dd[c]);
        xy[r].add(w * dd[r] * dd[k]);
      }
    }
  }
  MatrixXd A(k, k);
  VectorXd b(k);
  for (std::size_t r = 0; r < k; ++r) {
    b[r] = xy[r].value();
    for (std::size_t c = 0; c < k; ++c) A(r, c) = xx[r * k + c].value();
  }
  Eigen::FullPivLU<MatrixXd> lu(A);
  lu.setThreshold(1e-12);
  if (lu.rank() < static_cast<Eigen::Index>(k)) throw DomainError("singular demeaned design: no within variation");
  const VectorXd beta = lu.solve(b);
  return {beta.data(), beta.data() + k};
}

}  // namespace cfpanel
