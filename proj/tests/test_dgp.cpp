#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"

#include "cfpanel/dgp.hpp"
#include "cfpanel/error.hpp"
#include "cfpanel/estimator.hpp"
#include "cfpanel/harness.hpp"

using namespace cfpanel;

namespace {

// Largest gap between the empirical CDF of `x` and the uniform CDF.
double ks_uniform(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    d = std::max({d, std::abs((i + 1) / n - x[i]), std::abs(x[i] - i / n)});
  }
  return d;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= t) ++i;
    while (j < b.size() && b[j] <= t) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

std::vector<std::pair<double, double>> copula_draws(double nu, std::size_t n, std::uint64_t seed) {
  auto rng = Rng::derive(seed, {17});
  std::vector<std::pair<double, double>> out(n);
  for (auto& p : out) p = sample_copula_pair(nu, rng);
  return out;
}

double tau_of(const std::vector<std::pair<double, double>>& draws) {
  std::vector<double> u, v;
  for (const auto& [a, b] : draws) {
    u.push_back(a);
    v.push_back(b);
  }
  return kendall_tau(u, v);
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Joint CDF of the continuous design at (u, x, v, y).
double copula_design_cdf(const CopulaDgpSpec& s, double u, double x, double v, double y) {
  if (u <= 0 || v <= 0 || x <= 0 || y <= 0) return 0.0;
  return gumbel_copula_cdf(std::min(u, 1.0), std::min(v, 1.0), s.nu) * (1 - std::exp(-x / s.mu1)) *
         (1 - std::exp(-y / s.mu2));
}

}  // namespace

TEST_CASE("Gumbel copula CDF") {
  for (double u : {0.1, 0.5, 0.9}) {
    for (double v : {0.2, 0.7}) {
      CHECK(gumbel_copula_cdf(u, v, 1.0) == doctest::Approx(u * v).epsilon(1e-14));
      CHECK(gumbel_copula_cdf(1.0, v, 3.0) == doctest::Approx(v).epsilon(1e-14));
      CHECK(gumbel_copula_cdf(u, 0.0, 2.0) == 0.0);
    }
  }
  CHECK_THROWS_AS(gumbel_copula_cdf(0.5, 0.5, 0.9), InputError);
}

TEST_CASE("Kendall's tau by inversion counting matches pairwise counting on untied data") {
  auto rng = Rng(4);
  std::vector<double> x(300), y(300);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = rng.uniform();
    y[i] = x[i] * 0.3 + rng.uniform();
  }
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double a = (x[i] - x[j]) * (y[i] - y[j]);
      s += a > 0 ? 1 : (a < 0 ? -1 : 0);
    }
  const double n = static_cast<double>(x.size());
  CHECK(kendall_tau(x, y) == doctest::Approx(s / (n * (n - 1) / 2)).epsilon(1e-12));
}

TEST_CASE("copula sampler") {
  SUBCASE("rank correlation is 1 - 1/nu") {
    CHECK(std::abs(tau_of(copula_draws(2.0, 100000, 1)) - 0.5) <= 0.02);
    CHECK(std::abs(tau_of(copula_draws(10.0, 100000, 2)) - 0.9) <= 0.02);
  }
  SUBCASE("uniform margins") {
    const auto draws = copula_draws(3.0, 100000, 3);
    std::vector<double> u, v;
    for (const auto& [a, b] : draws) {
      CHECK(a > 0.0);
      CHECK(a < 1.0);
      u.push_back(a);
      v.push_back(b);
    }
    CHECK(ks_uniform(u) < 0.01);
    CHECK(ks_uniform(v) < 0.01);
  }
  SUBCASE("independence at nu = 1") {
    const auto draws = copula_draws(1.0, 100000, 4);
    CHECK(std::abs(tau_of(draws)) < 0.01);
    // the product u * v is uniform on [0, 1] only under independence
    // through the law of -log(u v), a Gamma(2, 1) variable
    std::vector<double> g;
    for (const auto& [a, b] : draws) {
      const double t = -std::log(a * b);
      g.push_back(1.0 - std::exp(-t) * (1.0 + t));
    }
    CHECK(ks_uniform(g) < 1.63 / std::sqrt(100000.0));
  }
  SUBCASE("empirical CDF inside the DKW band") {
    const std::size_t n = 100000;
    const auto draws = copula_draws(2.0, n, 5);
    const double band = std::sqrt(std::log(2.0 / 0.01) / (2.0 * n));
    double worst = 0.0;
    for (int i = 1; i < 20; ++i) {
      for (int j = 1; j < 20; ++j) {
        const double u = i / 20.0, v = j / 20.0;
        std::size_t c = 0;
        for (const auto& [a, b] : draws) c += (a <= u && b <= v) ? 1 : 0;
        worst = std::max(worst, std::abs(double(c) / n - gumbel_copula_cdf(u, v, 2.0)));
      }
    }
    CHECK(worst < band);
  }
  SUBCASE("deterministic for a seed") {
    CHECK(copula_draws(2.0, 1000, 9) == copula_draws(2.0, 1000, 9));
  }
}

TEST_CASE("discrete design: pointwise stay probabilities") {
  SUBCASE("zero slopes give G(0) everywhere") {
    DiscreteDgpSpec spec;
    spec.transition = banded_transition(5, 0.23);
    const auto lat = build_lattice(spec);
    for (double s : lat.stay) CHECK(s == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("two-state table by hand") {
    DiscreteDgpSpec spec;
    spec.m = 2;
    spec.transition = {{0.7, 0.3}, {0.4, 0.6}};
    spec.c1 = -0.2;
    spec.c2 = 0.1;
    spec.intercept = 0.3;
    const auto lat = build_lattice(spec);
    const auto G = [&](double z1, double z2) { return logistic(0.3 - 0.2 * z1 + 0.1 * z2); };
    // cell masses with a uniform initial law
    const double f11 = 0.35, f12 = 0.15, f21 = 0.2, f22 = 0.3;
    const double F11 = f11, F12 = f11 + f12, F21 = f11 + f21, F22 = 1.0;
    const double s11 = G(1, 1);
    const double s12 = (G(1, 2) * F12 - G(1, 1) * F11) / f12;
    const double s21 = (G(2, 1) * F21 - G(1, 1) * F11) / f21;
    const double s22 = (G(2, 2) * F22 - G(1, 2) * F12 - G(2, 1) * F21 + G(1, 1) * F11) / f22;
    CHECK(std::abs(lat.stay[0] - s11) <= 1e-12);
    CHECK(std::abs(lat.stay[1] - s12) <= 1e-12);
    CHECK(std::abs(lat.stay[2] - s21) <= 1e-12);
    CHECK(std::abs(lat.stay[3] - s22) <= 1e-12);
  }
  SUBCASE("slopes too large for a proper law") {
    DiscreteDgpSpec spec;
    spec.transition = banded_transition(5, 0.23);
    spec.c1 = 3.0;
    spec.c2 = -3.0;
    CHECK_THROWS_AS(build_lattice(spec), DomainError);
  }
  SUBCASE("rectangle stay probabilities follow the link, and integrate to the stay rate") {
    const Design design = named_design("table1-m5");
    const auto& spec = std::get<DiscreteDgpSpec>(design.spec);
    const auto lat = build_lattice(spec);
    double rate = 0.0;
    for (std::size_t c = 0; c < lat.cells(); ++c) rate += lat.pmf[c] * lat.stay[c];
    CHECK(std::abs(rate - lat.stay_rate) <= 1e-12);
    CHECK(std::abs(lat.stay_rate - 0.7) <= 1e-4);

    // exact rectangle ratios, then a 10^6-unit Monte Carlo check
    auto rng = Rng::derive(1, {55});
    const std::size_t n = 1000000;
    std::vector<double> cumulative(lat.cells());
    std::partial_sum(lat.pmf.begin(), lat.pmf.end(), cumulative.begin());
    std::vector<std::size_t> drawn(lat.cells(), 0), stayed(lat.cells(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto it = std::upper_bound(cumulative.begin(), cumulative.end(), rng.uniform() * cumulative.back());
      const auto c = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - cumulative.begin(), lat.cells() - 1));
      ++drawn[c];
      stayed[c] += rng.bernoulli(lat.stay[c]) ? 1 : 0;
    }
    for (std::size_t a = 0; a < spec.m; ++a) {
      for (std::size_t b = 0; b < spec.m; ++b) {
        double mass = 0, stay_mass = 0;
        std::size_t nd = 0, ns = 0;
        for (std::size_t i = 0; i <= a; ++i)
          for (std::size_t j = 0; j <= b; ++j) {
            const std::size_t c = i * spec.m + j;
            mass += lat.pmf[c];
            stay_mass += lat.pmf[c] * lat.stay[c];
            nd += drawn[c];
            ns += stayed[c];
          }
        const double g = logistic(spec.intercept + spec.c1 * (a + 1.0) + spec.c2 * (b + 1.0));
        CHECK(std::abs(stay_mass / mass - g) <= 1e-12);
        const double se = std::sqrt(g * (1 - g) / nd);
        CHECK(std::abs(double(ns) / nd - g) <= 3 * se);
      }
    }
  }
}

TEST_CASE("continuous design: pointwise stay probability") {
  CopulaDgpSpec spec;
  spec.c1 = spec.c2 = 0.0;
  SUBCASE("zero slopes give G(0)") {
    const auto t = stay_terms(spec, 0.3, 0.5, 0.6, 1.2);
    CHECK(stay_probability(spec, t, 0.0) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("matches box differencing of G(k) F") {
    spec.c1 = 0.4;
    spec.c2 = -0.3;
    const double a = 0.2;
    const double cap1 = -spec.mu1 * std::log(1 - spec.cap_quantile);
    const auto H = [&](double u, double x, double v, double y) {
      const double k = a + spec.c1 * u * std::min(x, cap1) + spec.c2 * v * std::min(y, cap1);
      return logistic(k) * copula_design_cdf(spec, u, x, v, y);
    };
    const double e = 2e-3;
    for (const auto& z : std::vector<std::array<double, 4>>{{0.3, 0.5, 0.6, 1.2}, {0.8, 2.0, 0.4, 0.3},
                                                            {0.5, 1.0, 0.5, 1.0}}) {
      double dh = 0, df = 0;
      for (int s = 0; s < 16; ++s) {
        double c[4];
        int sign = 1;
        for (int k = 0; k < 4; ++k) {
          c[k] = (s >> k & 1) ? z[k] - e : z[k] + e;
          if (s >> k & 1) sign = -sign;
        }
        dh += sign * H(c[0], c[1], c[2], c[3]);
        df += sign * copula_design_cdf(spec, c[0], c[1], c[2], c[3]);
      }
      const auto t = stay_terms(spec, z[0], z[1], z[2], z[3]);
      CHECK(std::abs(raw_stay_probability(spec, t, a) - dh / df) <= 1e-4);
    }
  }
  SUBCASE("stay probabilities integrate to G at the top corner") {
    spec.c1 = spec.c2 = 0.03;
    spec.intercept = -0.9;
    auto rng = Rng::derive(3, {21});
    const std::size_t n = 400000;
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto [u, v] = sample_copula_pair(spec.nu, rng);
      const double x = rng.exponential(spec.mu1), y = rng.exponential(spec.mu2);
      const double p = raw_stay_probability(spec, stay_terms(spec, u, x, v, y), spec.intercept);
      sum += p;
      sq += p * p;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::abs(mean - unclipped_stay_rate(spec)) <= 4 * se);
  }
}

TEST_CASE("attrition calibration") {
  SUBCASE("zero slopes") {
    DiscreteDgpSpec spec;
    spec.transition = banded_transition(5, 0.23);
    CHECK(std::abs(calibrate_attrition(spec, 0.5).intercept) <= 1e-3);
    const auto r = calibrate_attrition(spec, 0.3);
    CHECK(std::abs(r.intercept - 0.8473) <= 1e-3);
    CHECK(std::abs(r.stay_rate - 0.7) <= 1e-4);
  }
  SUBCASE("simulated attrition of the calibrated discrete design") {
    const Design design = named_design("table1-m5");
    const auto study = simulate(design.spec, 100000, 10, 77);
    CHECK(std::abs(study.attrition_rate - 0.30) <= 0.005);
  }
  SUBCASE("continuous design") {
    CopulaDgpSpec spec;
    const auto r = calibrate_attrition(spec, 0.7, 1e-4, 200000, 3);
    CHECK(std::abs(r.stay_rate - 0.3) <= 1e-4);
    CHECK(r.clipped_mass <= 0.01);
    const auto study = simulate(spec, 100000, 10, 5);
    CHECK(std::abs(study.attrition_rate - 0.7) <= 0.01);
  }
  SUBCASE("unreachable targets") {
    CopulaDgpSpec spec;
    spec.c1 = spec.c2 = 5.0;
    CHECK_THROWS_AS(calibrate_attrition(spec, 0.7, 1e-4, 20000, 3), DomainError);
    DiscreteDgpSpec d;
    d.transition = banded_transition(5, 0.23);
    CHECK_THROWS_AS(calibrate_attrition(d, 1.5), InputError);
  }
}

TEST_CASE("simulation") {
  SUBCASE("no attrition") {
    DiscreteDgpSpec spec;
    spec.transition = banded_transition(5, 0.23);
    spec.intercept = 50.0;
    const auto study = simulate(spec, 2000, 100, 1);
    CHECK(study.panel.n2() == 2000);
    CHECK(study.attrition_rate == 0.0);
  }
  SUBCASE("same seed, same study") {
    const Design design = named_design("table1-m5");
    const auto a = simulate(design.spec, 500, 300, 12);
    const auto b = simulate(design.spec, 500, 300, 12);
    REQUIRE(a.panel.n1() == b.panel.n1());
    for (std::size_t i = 0; i < a.panel.n1(); ++i) {
      CHECK(a.panel.units[i].z1 == b.panel.units[i].z1);
      CHECK(a.panel.units[i].z2 == b.panel.units[i].z2);
    }
    CHECK(a.refreshment.rows.values() == b.refreshment.rows.values());
    CHECK(a.theta_true == b.theta_true);
    const auto c = simulate(design.spec, 500, 300, 13);
    CHECK(c.refreshment.rows.values() != a.refreshment.rows.values());
  }
  SUBCASE("refreshment rows follow the second-wave marginal") {
    CopulaDgpSpec spec;
    spec.c1 = spec.c2 = 0.0;
    spec.intercept = 50.0;
    const auto study = simulate(spec, 100000, 100000, 8);
    std::vector<double> panel_v, panel_y, ref_v, ref_y;
    for (const auto& u : study.panel.units) {
      panel_v.push_back((*u.z2)[0]);
      panel_y.push_back((*u.z2)[1]);
    }
    for (std::size_t i = 0; i < study.refreshment.rows.size(); ++i) {
      ref_v.push_back(study.refreshment.rows[i][0]);
      ref_y.push_back(study.refreshment.rows[i][1]);
    }
    const double crit = 1.63 * std::sqrt(2.0 / 100000.0);
    CHECK(ks_two_sample(panel_v, ref_v) < crit);
    CHECK(ks_two_sample(panel_y, ref_y) < crit);
  }
}

TEST_CASE("targets") {
  DiscreteDgpSpec d;
  d.transition = banded_transition(5, 0.23);
  CHECK(true_theta(d) == 0.23);

  CopulaDgpSpec indep;
  indep.nu = 1.0;
  double se = 0;
  const double t1 = true_theta(indep, &se);
  CHECK(se < 1e-3);
  CHECK(std::abs(t1 - 0.25) <= 4 * se + 1e-4);

  CopulaDgpSpec two;
  const double t2 = true_theta(two, &se);
  CHECK(std::abs(t2 - 0.3) <= 0.01);
  CHECK(std::abs(t2 - (0.25 + 0.0568)) <= 0.002);
}

TEST_CASE("fixed-effects design") {
  const FeDgpSpec spec;
  const auto lat = build_lattice(spec);
  CHECK(std::abs(lat.stay_rate - 0.6) <= 1e-12);
  double rate = 0.0, mass = 0.0;
  for (std::size_t c = 0; c < lat.cells(); ++c) {
    rate += lat.pmf[c] * lat.stay[c];
    mass += lat.pmf[c];
    CHECK(lat.stay[c] >= 0.0);
    CHECK(lat.stay[c] <= 1.0);
  }
  CHECK(std::abs(mass - 1.0) <= 1e-12);
  CHECK(std::abs(rate - 0.6) <= 1e-12);
  // stayers follow y_t = alpha + t + 2 x_t + e_t exactly
  const std::vector<std::size_t> xs{0};
  CHECK(std::abs(twoway_fe_estimand(lat.stayer_measure().view(), 2, xs, 1)[0] - 2.0) <= 1e-10);
  // selection on outcomes moves the population slope away from 2
  const double truth = true_theta(spec);
  CHECK(std::abs(truth - 2.0) > 0.05);
  CHECK(period_dim(spec) == 2);
}
