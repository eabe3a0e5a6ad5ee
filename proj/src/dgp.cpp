#include "cfpanel/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>

#include "cfpanel/error.hpp"
#include "cfpanel/estimator.hpp"
#include "cfpanel/jet.hpp"
#include "cfpanel/numeric.hpp"

namespace cfpanel {

double gumbel_copula_cdf(double u, double v, double nu) {
  if (!(nu >= 1.0)) throw InputError("Gumbel copula needs nu >= 1");
  if (!(u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0)) throw InputError("copula arguments must lie in [0, 1]");
  if (u == 0.0 || v == 0.0) return 0.0;
  const double s = std::pow(-std::log(u), nu) + std::pow(-std::log(v), nu);
  return std::exp(-std::pow(s, 1.0 / nu));
}

std::pair<double, double> sample_copula_pair(double nu, Rng& rng) {
  if (!(nu >= 1.0)) throw InputError("Gumbel copula needs nu >= 1");
  const double alpha = 1.0 / nu;
  double frailty = 1.0;
  if (alpha < 1.0) {
    // Kanter's representation of the positive stable law exp(-t^alpha).
    const double theta = std::numbers::pi * rng.uniform_open();
    const double w = rng.exponential();
    frailty = std::sin(alpha * theta) / std::pow(std::sin(theta), 1.0 / alpha) *
              std::pow(std::sin((1.0 - alpha) * theta) / w, (1.0 - alpha) / alpha);
  }
  const double e1 = rng.exponential();
  const double e2 = rng.exponential();
  return {std::exp(-std::pow(e1 / frailty, alpha)), std::exp(-std::pow(e2 / frailty, alpha))};
}

namespace {

std::uint64_t count_inversions(std::vector<double>& a, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t inv = count_inversions(a, buf, lo, mid) + count_inversions(a, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (a[j] < a[i]) {
      inv += mid - i;
      buf[k++] = a[j++];
    } else {
      buf[k++] = a[i++];
    }
  }
  while (i < mid) buf[k++] = a[i++];
  while (j < hi) buf[k++] = a[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            a.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

}  // namespace

double kendall_tau(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("Kendall's tau needs two matched samples of size >= 2");
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  const std::uint64_t discordant = count_inversions(ys, buf, 0, n);
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  return 1.0 - 2.0 * static_cast<double>(discordant) / pairs;
}

// ---- lattice -------------------------------------------------------------

namespace {

std::vector<std::size_t> lattice_dims(const std::vector<std::vector<double>>& axes) {
  std::vector<std::size_t> dims;
  for (const auto& a : axes) dims.push_back(a.size());
  return dims;
}

std::size_t stride_of(const std::vector<std::size_t>& dims, std::size_t axis) {
  std::size_t s = 1;
  for (std::size_t k = axis + 1; k < dims.size(); ++k) s *= dims[k];
  return s;
}

// Running sums along every axis: pmf -> CDF.
void cumulate(std::vector<double>& v, const std::vector<std::size_t>& dims) {
  for (std::size_t ax = 0; ax < dims.size(); ++ax) {
    const std::size_t stride = stride_of(dims, ax);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if ((i / stride) % dims[ax] != 0) v[i] += v[i - stride];
    }
  }
}

// Backward differences along every axis with zero below the lattice: CDF -> pmf.
void difference(std::vector<double>& v, const std::vector<std::size_t>& dims) {
  for (std::size_t ax = 0; ax < dims.size(); ++ax) {
    const std::size_t stride = stride_of(dims, ax);
    for (std::size_t i = v.size(); i-- > 0;) {
      if ((i / stride) % dims[ax] != 0) v[i] -= v[i - stride];
    }
  }
}

void check_lattice(std::size_t d, const std::vector<std::vector<double>>& axes, const std::vector<double>& pmf) {
  if (d == 0 || axes.size() != 2 * d) throw InputError("lattice needs 2d axes");
  std::size_t cells = 1;
  for (const auto& a : axes) {
    if (a.empty() || !std::is_sorted(a.begin(), a.end()) ||
        std::adjacent_find(a.begin(), a.end()) != a.end()) {
      throw InputError("lattice axes must be nonempty and strictly increasing");
    }
    cells *= a.size();
  }
  if (pmf.size() != cells) throw InputError("lattice pmf has the wrong number of cells");
  CompensatedSum total;
  for (double p : pmf) {
    if (!(p >= 0.0)) throw InputError("lattice pmf has a negative or non-finite cell");
    total.add(p);
  }
  if (std::abs(total.value() - 1.0) > 1e-12) throw InputError("lattice pmf does not sum to 1");
}

std::vector<double> k_values(const LatticeDgp& lat, const LatticeIndexFn& k) {
  std::vector<double> out(lat.cells());
  for (std::size_t c = 0; c < lat.cells(); ++c) out[c] = k(lat.point(c));
  return out;
}

}  // namespace

std::vector<double> LatticeDgp::point(std::size_t cell) const {
  std::vector<double> z(axes.size());
  for (std::size_t ax = axes.size(); ax-- > 0;) {
    z[ax] = axes[ax][cell % axes[ax].size()];
    cell /= axes[ax].size();
  }
  return z;
}

SignedMeasure LatticeDgp::population_measure() const {
  std::vector<double> coords, weights;
  for (std::size_t c = 0; c < cells(); ++c) {
    if (pmf[c] <= 0.0) continue;
    const auto z = point(c);
    coords.insert(coords.end(), z.begin(), z.end());
    weights.push_back(pmf[c]);
  }
  return SignedMeasure(2 * d, std::move(coords), std::move(weights));
}

SignedMeasure LatticeDgp::stayer_measure() const {
  std::vector<double> coords, weights;
  CompensatedSum total;
  for (std::size_t c = 0; c < cells(); ++c) total.add(pmf[c] * stay[c]);
  for (std::size_t c = 0; c < cells(); ++c) {
    const double w = pmf[c] * stay[c];
    if (w <= 0.0) continue;
    const auto z = point(c);
    coords.insert(coords.end(), z.begin(), z.end());
    weights.push_back(w / total.value());
  }
  return SignedMeasure(2 * d, std::move(coords), std::move(weights));
}

LatticeDgp lattice_forward(std::size_t d, std::vector<std::vector<double>> axes, std::vector<double> pmf,
                           const LatticeIndexFn& k, const LinkFunction& link) {
  check_lattice(d, axes, pmf);
  LatticeDgp lat;
  lat.d = d;
  lat.axes = std::move(axes);
  lat.pmf = std::move(pmf);
  const auto dims = lattice_dims(lat.axes);
  const auto kv = k_values(lat, k);
  std::vector<double> H = lat.pmf;
  cumulate(H, dims);
  for (std::size_t c = 0; c < H.size(); ++c) H[c] *= link.forward(kv[c]);
  difference(H, dims);
  lat.stay.assign(lat.cells(), 0.0);
  for (std::size_t c = 0; c < lat.cells(); ++c) {
    if (lat.pmf[c] <= 0.0) continue;
    const double s = H[c] / lat.pmf[c];
    if (!(s >= -1e-9 && s <= 1.0 + 1e-9)) {
      throw DomainError("invalid design: stay probability " + format_double(s) + " at cell " +
                        std::to_string(c) + " lies outside [0, 1]");
    }
    lat.stay[c] = std::clamp(s, 0.0, 1.0);
  }
  lat.stay_rate = link.forward(kv.back());
  return lat;
}

LatticeDgp lattice_reverse(std::size_t d, std::vector<std::vector<double>> axes, std::vector<double> fw,
                           const LatticeIndexFn& k, const LinkFunction& link) {
  check_lattice(d, axes, fw);
  LatticeDgp lat;
  lat.d = d;
  lat.axes = std::move(axes);
  lat.pmf.assign(fw.size(), 0.0);
  const auto dims = lattice_dims(lat.axes);
  const auto kv = k_values(lat, k);
  const double p = link.forward(kv.back());
  std::vector<double> F = fw;
  cumulate(F, dims);
  for (std::size_t c = 0; c < F.size(); ++c) F[c] = p * F[c] / link.forward(kv[c]);
  difference(F, dims);
  lat.stay.assign(lat.cells(), 0.0);
  for (std::size_t c = 0; c < lat.cells(); ++c) {
    if (F[c] < -1e-12) {
      throw DomainError("invalid design: implied population mass " + format_double(F[c]) + " at cell " +
                        std::to_string(c));
    }
    lat.pmf[c] = std::max(F[c], 0.0);
    if (lat.pmf[c] > 0.0) {
      const double s = p * fw[c] / lat.pmf[c];
      if (s > 1.0 + 1e-9) {
        throw DomainError("invalid design: stay probability " + format_double(s) + " at cell " +
                          std::to_string(c));
      }
      lat.stay[c] = std::min(s, 1.0);
    } else if (fw[c] > 0.0) {
      throw DomainError("invalid design: stayer mass on a cell without population mass");
    }
  }
  lat.stay_rate = p;
  return lat;
}

std::vector<std::vector<double>> banded_transition(std::size_t m, double stay_diag) {
  if (m < 2) throw InputError("transition matrix needs m >= 2");
  std::vector<std::vector<double>> P(m, std::vector<double>(m, (1.0 - stay_diag) / static_cast<double>(m - 1)));
  for (std::size_t i = 0; i < m; ++i) P[i][i] = stay_diag;
  return P;
}

void check_spec(const DiscreteDgpSpec& spec) {
  if (spec.m < 2) throw InputError("discrete design needs m >= 2");
  if (spec.transition.size() != spec.m) throw InputError("transition matrix must be m x m");
  for (const auto& row : spec.transition) {
    if (row.size() != spec.m) throw InputError("transition matrix must be m x m");
    CompensatedSum s;
    for (double p : row) {
      if (!(p > 0.0)) throw InputError("transition entries must be positive");
      s.add(p);
    }
    if (std::abs(s.value() - 1.0) > 1e-12) throw InputError("transition rows must sum to 1");
  }
}

LatticeDgp build_lattice(const DiscreteDgpSpec& spec) {
  check_spec(spec);
  std::vector<double> support(spec.m);
  std::iota(support.begin(), support.end(), 1.0);
  std::vector<double> pmf;
  for (const auto& row : spec.transition)
    for (double p : row) pmf.push_back(p / static_cast<double>(spec.m));
  return lattice_forward(1, {support, support}, std::move(pmf),
                         [&](std::span<const double> z) { return spec.intercept + spec.c1 * z[0] + spec.c2 * z[1]; },
                         spec.link);
}

LatticeDgp build_lattice(const FeDgpSpec& spec) {
  const std::vector<double> xs{0, 1, 2};
  const std::vector<double> ys{0, 1, 2, 3, 4, 5, 6, 7};
  const std::size_t nx = xs.size(), ny = ys.size();
  std::vector<double> fw(nx * ny * nx * ny, 0.0);
  const double px[2][3] = {{0.5, 0.3, 0.2}, {0.2, 0.3, 0.5}};
  for (int alpha = 0; alpha < 2; ++alpha)
    for (std::size_t x1 = 0; x1 < nx; ++x1)
      for (std::size_t x2 = 0; x2 < nx; ++x2)
        for (int e1 = 0; e1 < 2; ++e1)
          for (int e2 = 0; e2 < 2; ++e2) {
            const auto y1 = static_cast<std::size_t>(alpha + 2 * static_cast<int>(x1) + e1);
            const auto y2 = static_cast<std::size_t>(alpha + 1 + 2 * static_cast<int>(x2) + e2);
            fw[((x1 * ny + y1) * nx + x2) * ny + y2] += 0.5 * px[alpha][x1] * px[alpha][x2] * 0.25;
          }
  if (!(spec.stay_rate > 0.0 && spec.stay_rate < 1.0)) throw InputError("FE design stay rate must lie in (0, 1)");
  const double a = spec.link.inverse(spec.stay_rate) - (spec.c1 + spec.c2) * ys.back();
  return lattice_reverse(2, {xs, ys, xs, ys}, std::move(fw),
                         [&](std::span<const double> z) { return a + spec.c1 * z[1] + spec.c2 * z[3]; }, spec.link);
}

// ---- continuous design ---------------------------------------------------

namespace {

Jet4 jet_exp(const Jet4& x) {
  const double e = std::exp(x.value());
  return x.apply({e, e, e, e, e});
}

Jet4 jet_log(const Jet4& x) {
  const double v = x.value();
  return x.apply({std::log(v), 1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v), -6.0 / (v * v * v * v)});
}

Jet4 jet_pow(const Jet4& x, double r) {
  const double v = x.value();
  if (r == 1.0) return x;
  std::array<double, 5> d{};
  double coef = 1.0;
  for (int n = 0; n < 5; ++n) {
    d[n] = coef * std::pow(v, r - n);
    coef *= r - n;
  }
  return x.apply(d);
}

std::array<double, 5> link_derivatives(const LinkFunction& link, double k) {
  switch (link.kind()) {
    case LinkFunction::Kind::kLogit: {
      const double s = link.forward(k);
      const double g1 = s * (1.0 - s);
      return {s, g1, g1 * (1.0 - 2.0 * s), g1 * (1.0 - 6.0 * s + 6.0 * s * s),
              g1 * (1.0 - 2.0 * s) * (1.0 - 12.0 * s + 12.0 * s * s)};
    }
    case LinkFunction::Kind::kExp: {
      const double e = std::exp(k);
      return {e, e, e, e, e};
    }
    default:
      throw InputError("the continuous design supports the logit and exp links only");
  }
}

double exp_quantile(double mean, double q) { return -mean * std::log1p(-q); }

}  // namespace

void check_spec(const CopulaDgpSpec& spec) {
  if (!(spec.nu >= 1.0)) throw InputError("copula design needs nu >= 1");
  if (!(spec.mu1 > 0.0 && spec.mu2 > 0.0)) throw InputError("exponential means must be positive");
  if (!(spec.cap_quantile > 0.0 && spec.cap_quantile < 1.0)) throw InputError("cap quantile must lie in (0, 1)");
  if (!std::isfinite(spec.c1) || !std::isfinite(spec.c2) || !std::isfinite(spec.intercept)) {
    throw InputError("copula design coefficients must be finite");
  }
  (void)link_derivatives(spec.link, 0.0);
}

StayTerms stay_terms(const CopulaDgpSpec& spec, double u, double x, double v, double y) {
  // Variables: u -> bit 0, x -> bit 1, v -> bit 2, y -> bit 3.
  const Jet4 U = Jet4::variable(u, 0), X = Jet4::variable(x, 1);
  const Jet4 V = Jet4::variable(v, 2), Y = Jet4::variable(y, 3);
  const double cap1 = exp_quantile(spec.mu1, spec.cap_quantile);
  const double cap2 = exp_quantile(spec.mu2, spec.cap_quantile);
  const Jet4 Xc = x < cap1 ? X : Jet4(cap1);
  const Jet4 Yc = y < cap2 ? Y : Jet4(cap2);
  const Jet4 k = spec.c1 * (U * Xc) + spec.c2 * (V * Yc);

  const Jet4 s = jet_pow(-jet_log(U), spec.nu) + jet_pow(-jet_log(V), spec.nu);
  const Jet4 C = jet_exp(-jet_pow(s, 1.0 / spec.nu));
  const Jet4 E1 = (-jet_exp(X * (-1.0 / spec.mu1))) + 1.0;
  const Jet4 E2 = (-jet_exp(Y * (-1.0 / spec.mu2))) + 1.0;
  const Jet4 F = C * E1 * E2;

  StayTerms t;
  t.base_k = k.value();
  const Jet4 delta = k.infinitesimal();
  Jet4 power(1.0);
  for (std::size_t n = 0; n < 5; ++n) {
    t.moment[n] = (power * F)[15];
    power = power * delta;
  }
  t.density = C[5] * std::exp(-x / spec.mu1) / spec.mu1 * std::exp(-y / spec.mu2) / spec.mu2;
  return t;
}

double raw_stay_probability(const CopulaDgpSpec& spec, const StayTerms& t, double a) {
  const auto g = link_derivatives(spec.link, a + t.base_k);
  const double factorial[5] = {1.0, 1.0, 2.0, 6.0, 24.0};
  double num = 0.0;
  for (std::size_t n = 0; n < 5; ++n) num += g[n] * t.moment[n] / factorial[n];
  return num / t.density;
}

double stay_probability(const CopulaDgpSpec& spec, const StayTerms& t, double a) {
  const double p = raw_stay_probability(spec, t, a);
  if (!std::isfinite(p)) return std::clamp(spec.link.forward(a + t.base_k), 0.0, 1.0);
  return std::clamp(p, 0.0, 1.0);
}

double unclipped_stay_rate(const CopulaDgpSpec& spec) {
  const double cap1 = exp_quantile(spec.mu1, spec.cap_quantile);
  const double cap2 = exp_quantile(spec.mu2, spec.cap_quantile);
  return spec.link.forward(spec.intercept + spec.c1 * cap1 + spec.c2 * cap2);
}

// ---- shared --------------------------------------------------------------

std::size_t period_dim(const DgpSpec& spec) {
  if (std::holds_alternative<DiscreteDgpSpec>(spec)) return 1;
  return 2;
}

CalibrationResult calibrate_attrition(DiscreteDgpSpec& spec, double target_attrition, double tol) {
  check_spec(spec);
  if (!(target_attrition > 0.0 && target_attrition < 1.0)) throw InputError("target attrition must lie in (0, 1)");
  const double target = 1.0 - target_attrition;
  const double m = static_cast<double>(spec.m);
  auto rate = [&](double a) { return spec.link.forward(a + (spec.c1 + spec.c2) * m); };
  double lo = -60.0, hi = 60.0;
  if (!(rate(lo) <= target && target <= rate(hi))) throw DomainError("calibration error: target rate unreachable");
  CalibrationResult r;
  double a = 0.5 * (lo + hi);
  for (r.iterations = 1; r.iterations <= 200; ++r.iterations) {
    a = 0.5 * (lo + hi);
    const double got = rate(a);
    if (std::abs(got - target) <= tol) break;
    (got < target ? lo : hi) = a;
  }
  spec.intercept = a;
  try {
    (void)build_lattice(spec);
  } catch (const DomainError& e) {
    throw DomainError(std::string("calibration error: ") + e.what());
  }
  r.intercept = a;
  r.stay_rate = rate(a);
  r.unclipped_rate = r.stay_rate;
  return r;
}

CalibrationResult calibrate_attrition(CopulaDgpSpec& spec, double target_attrition, double tol, std::size_t draws,
                                      std::uint64_t seed) {
  check_spec(spec);
  if (!(target_attrition > 0.0 && target_attrition < 1.0)) throw InputError("target attrition must lie in (0, 1)");
  if (draws == 0) throw InputError("calibration needs at least one draw");
  const double target = 1.0 - target_attrition;
  Rng rng = Rng::derive(seed, Stream::kCalibration, 0);
  std::vector<StayTerms> terms(draws);
  for (auto& t : terms) {
    const auto [u, v] = sample_copula_pair(spec.nu, rng);
    const double x = rng.exponential(spec.mu1);
    const double y = rng.exponential(spec.mu2);
    t = stay_terms(spec, u, x, v, y);
  }
  auto rate = [&](double a, double* clipped) {
    CompensatedSum sum, clip;
    for (const auto& t : terms) {
      const double raw = raw_stay_probability(spec, t, a);
      const double p = stay_probability(spec, t, a);
      sum.add(p);
      if (std::isfinite(raw)) clip.add(std::abs(raw - p));
    }
    if (clipped) *clipped = clip.value() / static_cast<double>(draws);
    return sum.value() / static_cast<double>(draws);
  };
  // Start from the intercept that gives the target without clipping.
  const double cap1 = exp_quantile(spec.mu1, spec.cap_quantile);
  const double cap2 = exp_quantile(spec.mu2, spec.cap_quantile);
  const double a0 = spec.link.inverse(spec.link.clamp(target)) - spec.c1 * cap1 - spec.c2 * cap2;
  double lo = a0 - 1.0, hi = a0 + 1.0;
  for (int e = 0; e < 30 && rate(lo, nullptr) > target; ++e) lo -= 2.0 * (hi - lo);
  for (int e = 0; e < 30 && rate(hi, nullptr) < target; ++e) hi += 2.0 * (hi - lo);
  if (!(rate(lo, nullptr) <= target && target <= rate(hi, nullptr))) {
    throw DomainError("calibration error: target rate unreachable");
  }
  CalibrationResult r;
  double a = a0;
  double got = rate(a, nullptr);
  for (r.iterations = 1; r.iterations <= 100 && std::abs(got - target) > tol; ++r.iterations) {
    (got < target ? lo : hi) = a;
    a = 0.5 * (lo + hi);
    got = rate(a, nullptr);
  }
  spec.intercept = a;
  r.intercept = a;
  r.stay_rate = rate(a, &r.clipped_mass);
  r.unclipped_rate = unclipped_stay_rate(spec);
  if (r.clipped_mass > 0.01) {
    throw DomainError("calibration error: clipped stay-probability mass " + format_double(r.clipped_mass) +
                      " exceeds 0.01; attrition slopes too large");
  }
  return r;
}

ValidatedData SimulatedStudy::validated() const { return validate(panel, refreshment); }

namespace {

std::size_t draw_cell(const std::vector<double>& cumulative, Rng& rng) {
  const double u = rng.uniform() * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) --it;
  return static_cast<std::size_t>(it - cumulative.begin());
}

SimulatedStudy simulate_lattice(const LatticeDgp& lat, std::size_t n1, std::size_t nr, Rng& panel_rng,
                                Rng& refresh_rng) {
  std::vector<double> cumulative(lat.cells());
  CompensatedSum run;
  for (std::size_t c = 0; c < lat.cells(); ++c) {
    run.add(lat.pmf[c]);
    cumulative[c] = run.value();
  }
  const std::size_t d = lat.d;
  SimulatedStudy st;
  st.panel.dim = d;
  st.panel.units.reserve(n1);
  std::size_t stayers = 0;
  for (std::size_t i = 0; i < n1; ++i) {
    const std::size_t c = draw_cell(cumulative, panel_rng);
    const auto z = lat.point(c);
    PanelUnit u;
    u.id = std::to_string(i + 1);
    u.z1.assign(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(d));
    if (panel_rng.bernoulli(lat.stay[c])) {
      u.z2 = std::vector<double>(z.begin() + static_cast<std::ptrdiff_t>(d), z.end());
      ++stayers;
    }
    st.panel.units.push_back(std::move(u));
  }
  st.refreshment.rows = PointSet(d);
  st.refreshment.rows.reserve(nr);
  for (std::size_t i = 0; i < nr; ++i) {
    const auto z = lat.point(draw_cell(cumulative, refresh_rng));
    st.refreshment.rows.push_back(std::span<const double>(z).subspan(d, d));
  }
  st.attrition_rate = n1 == 0 ? 0.0 : 1.0 - static_cast<double>(stayers) / static_cast<double>(n1);
  return st;
}

SimulatedStudy simulate_copula(const CopulaDgpSpec& spec, std::size_t n1, std::size_t nr, Rng& panel_rng,
                               Rng& refresh_rng) {
  SimulatedStudy st;
  st.panel.dim = 2;
  st.panel.units.reserve(n1);
  std::size_t stayers = 0;
  for (std::size_t i = 0; i < n1; ++i) {
    const auto [u, v] = sample_copula_pair(spec.nu, panel_rng);
    const double x = panel_rng.exponential(spec.mu1);
    const double y = panel_rng.exponential(spec.mu2);
    const double p = stay_probability(spec, stay_terms(spec, u, x, v, y), spec.intercept);
    PanelUnit unit;
    unit.id = std::to_string(i + 1);
    unit.z1 = {u, x};
    if (panel_rng.bernoulli(p)) {
      unit.z2 = std::vector<double>{v, y};
      ++stayers;
    }
    st.panel.units.push_back(std::move(unit));
  }
  st.refreshment.rows = PointSet(2);
  st.refreshment.rows.reserve(nr);
  for (std::size_t i = 0; i < nr; ++i) {
    const auto [u, v] = sample_copula_pair(spec.nu, refresh_rng);
    (void)u;
    (void)refresh_rng.exponential(spec.mu1);
    const double y = refresh_rng.exponential(spec.mu2);
    const double row[2] = {v, y};
    st.refreshment.rows.push_back(row);
  }
  st.attrition_rate = n1 == 0 ? 0.0 : 1.0 - static_cast<double>(stayers) / static_cast<double>(n1);
  return st;
}

}  // namespace

SimulatedStudy simulate(const DgpSpec& spec, std::size_t n1, std::size_t nr, std::uint64_t seed,
                        std::uint64_t rng_path) {
  Rng panel_rng = Rng::derive(seed, {static_cast<std::uint64_t>(Stream::kSimulate), rng_path, 0});
  Rng refresh_rng = Rng::derive(seed, {static_cast<std::uint64_t>(Stream::kSimulate), rng_path, 1});
  return std::visit(
      [&](const auto& s) -> SimulatedStudy {
        using T = std::decay_t<decltype(s)>;
        SimulatedStudy st;
        if constexpr (std::is_same_v<T, CopulaDgpSpec>) {
          check_spec(s);
          st = simulate_copula(s, n1, nr, panel_rng, refresh_rng);
        } else {
          st = simulate_lattice(build_lattice(s), n1, nr, panel_rng, refresh_rng);
        }
        st.theta_true = true_theta(spec);
        return st;
      },
      spec);
}

namespace {

double radical_inverse(std::uint64_t i, std::uint64_t base) {
  double inv = 1.0 / static_cast<double>(base), f = inv, r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

// E[UV] = integral of C over the unit square, by Halton points under ten
// random shifts.
double copula_product_moment_uncached(double nu, double* std_error) {
  constexpr std::size_t kShifts = 10;
  constexpr std::size_t kPoints = 200'000;
  std::vector<std::pair<double, double>> halton(kPoints);
  {
    for (std::size_t i = 0; i < kPoints; ++i) halton[i] = {radical_inverse(i + 1, 2), radical_inverse(i + 1, 3)};
  }
  Rng rng = Rng::derive(0, Stream::kQuadrature, 0);
  std::vector<double> means(kShifts);
  for (std::size_t s = 0; s < kShifts; ++s) {
    const double su = rng.uniform(), sv = rng.uniform();
    CompensatedSum acc;
    for (const auto& [hu, hv] : halton) {
      double u = hu + su, v = hv + sv;
      if (u >= 1.0) u -= 1.0;
      if (v >= 1.0) v -= 1.0;
      acc.add(gumbel_copula_cdf(u, v, nu));
    }
    means[s] = acc.value() / static_cast<double>(kPoints);
  }
  const double mean = std::accumulate(means.begin(), means.end(), 0.0) / kShifts;
  double var = 0.0;
  for (double m : means) var += (m - mean) * (m - mean);
  var /= kShifts - 1;
  if (std_error) *std_error = std::sqrt(var / kShifts);
  return mean;
}

// Memoized per nu; the quadrature does not depend on anything else.
double copula_product_moment(double nu, double* std_error) {
  static std::mutex mutex;
  static std::map<double, std::pair<double, double>> cache;
  {
    std::lock_guard<std::mutex> lock(mutex);
    if (auto it = cache.find(nu); it != cache.end()) {
      if (std_error) *std_error = it->second.second;
      return it->second.first;
    }
  }
  double se = 0.0;
  const double value = copula_product_moment_uncached(nu, &se);
  std::lock_guard<std::mutex> lock(mutex);
  cache[nu] = {value, se};
  if (std_error) *std_error = se;
  return value;
}

}  // namespace

double true_theta(const DgpSpec& spec, double* std_error) {
  if (std_error) *std_error = 0.0;
  if (const auto* s = std::get_if<DiscreteDgpSpec>(&spec)) {
    check_spec(*s);
    return s->transition[0][0];
  }
  if (const auto* s = std::get_if<CopulaDgpSpec>(&spec)) {
    check_spec(*s);
    return copula_product_moment(s->nu, std_error);
  }
  const auto& fe = std::get<FeDgpSpec>(spec);
  const LatticeDgp lat = build_lattice(fe);
  const std::size_t x_index = 0;
  return twoway_fe_estimand(lat.population_measure().view(), 2, std::span<const std::size_t>(&x_index, 1), 1)[0];
}

}  // namespace cfpanel
