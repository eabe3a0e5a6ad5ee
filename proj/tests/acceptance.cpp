// Acceptance run: one PASS/FAIL line per criterion, with the measured values
// and the wall time. INFO lines carry context that is not pass/fail.
// Exit status is nonzero when any criterion fails.
#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cfpanel/cli.hpp"
#include "cfpanel/dataio.hpp"
#include "cfpanel/dgp.hpp"
#include "cfpanel/ecdf.hpp"
#include "cfpanel/estimator.hpp"
#include "cfpanel/harness.hpp"
#include "cfpanel/measure.hpp"
#include "cfpanel/transform.hpp"

using namespace cfpanel;
namespace fs = std::filesystem;

namespace {

int g_threads = 1;
int g_failed = 0;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

void criterion(const std::string& name, const std::function<Verdict()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%s %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str(), secs);
  std::fflush(stdout);
  if (!v.pass) ++g_failed;
}

void info(const std::string& name, const std::string& detail) {
  std::printf("INFO %s: %s\n", name.c_str(), detail.c_str());
  std::fflush(stdout);
}

McReport run(const Design& design, std::size_t S, std::vector<std::pair<std::size_t, std::size_t>> sizes,
             std::uint64_t seed, GridStrategy grid = GridStrategy::kPaperTuples) {
  McConfig c;
  c.design = design;
  c.S = S;
  c.sizes = std::move(sizes);
  c.seed = seed;
  c.threads = g_threads;
  c.progress = false;
  c.estimate.grid = grid;
  return run_mc(c);
}

std::string size_summary(const McReport& r, const SizeReport& s) {
  std::ostringstream o;
  o << "n=" << s.n1 << " bias=" << fmt(s.corrected.bias) << (r.relative_bias ? " (relative)" : "")
    << " rmse=" << fmt(s.corrected.rmse) << " coverage90/95/99=" << fmt(s.coverage[0], 3) << "/"
    << fmt(s.coverage[1], 3) << "/" << fmt(s.coverage[2], 3) << " naive_bias=" << fmt(s.naive.bias)
    << " failed=" << s.failed << " mean_mass=" << fmt(s.mean_total_mass, 6);
  return o.str();
}

bool within(double x, double lo, double hi) { return x >= lo && x <= hi; }

// ---- oracles ---------------------------------------------------------------

Verdict population_identity() {
  // stayers uniform on the unit square, k1 = a + c1 z1, k2 = b + c2 z2, exp link
  const double a = -0.4, b = -0.3, c1 = -0.5, c2 = -0.2;
  const double p = std::exp(a + b + c1 + c2);
  const auto F = [&](double z1, double z2) {
    const double u = std::clamp(z1, 0.0, 1.0), v = std::clamp(z2, 0.0, 1.0);
    return p * u * v * std::exp(-(a + b) - c1 * u - c2 * v);
  };
  const auto Fw = [](double z1, double z2) { return std::clamp(z1, 0.0, 1.0) * std::clamp(z2, 0.0, 1.0); };
  double worst = 0.0;
  for (int i = 1; i <= 10; ++i) {
    for (int j = 1; j <= 10; ++j) {
      const double z1 = i / 10.0 - 0.05, z2 = j / 10.0 - 0.02;
      const double v = phi(p, F(z1, 1.0), F(1.0, z2), Fw(z1, 1.0), Fw(1.0, z2), Fw(z1, z2), exp_link());
      worst = std::max(worst, std::abs(v - F(z1, z2)));
    }
  }
  return {worst <= 1e-12, "max |Phi - F| over 100 points = " + fmt(worst, 3)};
}

Verdict ecdf_recovery() {
  Rng rng = Rng::derive(2024, {1});
  PointSet pts(2);
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> x{std::round(rng.uniform() * 1e6), std::round(rng.uniform() * 1e6)};
    pts.push_back(x);
  }
  const std::vector<double> h{0.5, 0.5};  // coordinates are integers
  const auto mu = ecdf_jump_masses(Ecdf(pts), pts, h);
  std::size_t exact = 0;
  for (double w : mu.weights()) exact += w == 1.0 / 100.0 ? 1 : 0;
  return {exact == 100 && mu.size() == 100, std::to_string(exact) + " of 100 weights equal 1/100 exactly"};
}

Verdict mass_conservation() {
  const Design t1 = named_design("table1-m5");
  const Design t2 = named_design("table2-nu2");
  EstimateOptions opts;
  opts.threads = g_threads;
  const auto discrete = simulate(t1.spec, 1000, 1000, 31).validated();
  const double m1 = corrected_measure(discrete, logit_link(), opts).total_mass();
  const auto copula = simulate(t2.spec, 1000, 1000, 32).validated();
  const std::vector<std::size_t> first{0}, second{1};
  const double m2 = corrected_measure(project_periods(copula, first), logit_link(), opts).total_mass();
  const double m3 = corrected_measure(project_periods(copula, second), logit_link(), opts).total_mass();
  const auto tuples = corrected_measure(copula, logit_link(), opts);
  info("mass conservation", "d=2 tuple grid on the continuous design: total mass " + fmt(tuples.total_mass(), 8) +
                                ", deficit " + fmt(1.0 - tuples.total_mass(), 4) + ", negative mass " +
                                fmt(tuples.negative_mass(), 4));
  const bool ok = within(m1, 0.999, 1.001) && within(m2, 0.999, 1.001) && within(m3, 0.999, 1.001);
  return {ok, "d=1 totals: discrete " + fmt(m1, 12) + ", continuous coordinate 1 " + fmt(m2, 12) +
                  ", coordinate 2 " + fmt(m3, 12)};
}

Verdict h_invariance() {
  const Design t1 = named_design("table1-m5");
  const Design t2 = named_design("table2-nu2");
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const bool discrete = s < 10;
    const Design& d = discrete ? t1 : t2;
    const auto data = simulate(d.spec, discrete ? 1000 : 400, discrete ? 1000 : 400, 700 + s).validated();
    EstimateOptions base;
    base.threads = g_threads;
    EstimateOptions third = base;
    third.h_scale = 1.0 / 3.0;
    const auto x = estimate_corrected(data, logit_link(), d.model, base).theta_hat;
    const auto y = estimate_corrected(data, logit_link(), d.model, third).theta_hat;
    for (std::size_t j = 0; j < x.size(); ++j) worst = std::max(worst, std::abs(x[j] - y[j]));
  }
  return {worst <= 1e-10, "max |theta(h) - theta(h/3)| over 20 datasets = " + fmt(worst, 3)};
}

// ---- Monte Carlo replications ---------------------------------------------

Verdict table1() {
  const Design d = named_design("table1-m5");
  const McReport r = run(d, 1000, {{1000, 1000}}, 101);
  const SizeReport& s = r.sizes[0];
  info("discrete design, n=1000, S=1000", size_summary(r, s));
  const McReport big = run(d, 100, {{10000, 10000}}, 102);
  const double naive_bias = big.sizes[0].naive.bias;
  const bool ok = std::abs(s.corrected.bias) <= 0.01 && within(s.corrected.rmse, 0.03, 0.06) &&
                  within(s.coverage[1], 0.92, 0.985) && std::abs(naive_bias) >= 0.03 && s.failed == 0;
  const bool levels_close = std::abs(s.coverage[2] - 0.995) <= 0.02 && std::abs(s.coverage[1] - 0.958) <= 0.02 &&
                            std::abs(s.coverage[0] - 0.910) <= 0.02;
  info("discrete design coverage per level", std::string(levels_close ? "within" : "outside") +
                                                 " 0.02 of 0.995/0.958/0.910 at 99/95/90%");
  return {ok, "relative bias " + fmt(s.corrected.bias) + ", rmse " + fmt(s.corrected.rmse) + ", 95% coverage " +
                  fmt(s.coverage[1], 3) + ", naive relative bias at n=10000 " + fmt(naive_bias)};
}

Verdict table2() {
  const Design d = named_design("table2-nu2");
  const McReport r = run(d, 500, {{1000, 1000}}, 201);
  const SizeReport& s = r.sizes[0];
  info("continuous design, tuple grid, n=1000, S=500", size_summary(r, s) + " theta=" + fmt(r.theta_true, 6));
  const McReport full = run(d, 500, {{1000, 1000}}, 201, GridStrategy::kFullProduct);
  info("continuous design, full-product grid, n=1000, S=500", size_summary(full, full.sizes[0]));
  const bool ok = std::abs(s.corrected.bias) <= 0.02 && s.corrected.rmse <= 0.05 && within(s.coverage[1], 0.92, 0.99);
  return {ok, "bias " + fmt(s.corrected.bias) + ", rmse " + fmt(s.corrected.rmse) + ", 95% coverage " +
                  fmt(s.coverage[1], 3)};
}

Verdict root_n() {
  const Design d = named_design("table1-m5");
  const McReport r = run(d, 300, {{500, 500}, {2000, 2000}, {8000, 8000}}, 301);
  const double a = r.sizes[0].corrected.rmse, b = r.sizes[1].corrected.rmse, c = r.sizes[2].corrected.rmse;
  const double r1 = b / a, r2 = c / b;
  return {within(r1, 0.35, 0.65) && within(r2, 0.35, 0.65),
          "rmse " + fmt(a) + " / " + fmt(b) + " / " + fmt(c) + ", ratios " + fmt(r1, 3) + " and " + fmt(r2, 3)};
}

Verdict mcar() {
  DiscreteDgpSpec spec;
  spec.transition = banded_transition(5, 0.23);
  spec.c1 = spec.c2 = 0.0;
  Design d = named_design("table1-m5");
  d.name = "mcar";
  d.calibration = calibrate_attrition(spec, 0.3);
  d.spec = spec;
  const McReport r = run(d, 300, {{1000, 1000}}, 401);
  std::vector<double> c, n;
  for (const auto& o : r.sizes[0].outcomes) {
    if (!o.ok) continue;
    c.push_back(o.corrected);
    n.push_back(o.naive);
  }
  const auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / v.size();
  };
  const auto sd = [&](const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / (v.size() - 1));
  };
  const double gap = mean(c) - mean(n);
  const double mc_se = sd(c) / std::sqrt(static_cast<double>(c.size()));

  // all stayers: the correction is the identity
  Rng rng = Rng::derive(402, {1});
  PanelDataset panel;
  panel.dim = 1;
  RefreshmentDataset refresh{PointSet(1)};
  for (int i = 0; i < 500; ++i) {
    const std::vector<double> z1{static_cast<double>(rng.index(5) + 1)};
    const std::vector<double> z2{static_cast<double>(rng.index(5) + 1)};
    panel.units.push_back({std::to_string(i + 1), z1, z2});
    refresh.rows.push_back(z2);
  }
  const auto data = validate(panel, refresh);
  double worst = 0.0;
  for (const auto& model : {cond_prob_model(1, 1.0, 1.0), mean_model(2, 1), product_moment_model(2, 0, 1)}) {
    const double x = estimate_corrected(data, logit_link(), model).theta_hat[0];
    const double y = estimate_naive(data, model).theta_hat[0];
    worst = std::max(worst, std::abs(x - y));
  }
  return {std::abs(gap) < 2 * mc_se && c.size() == 300 && worst <= 1e-10,
          "mean corrected - naive = " + fmt(gap, 3) + " vs 2 MC SE = " + fmt(2 * mc_se, 3) +
              "; all-stayers max gap " + fmt(worst, 3)};
}

// ---- CLI determinism -------------------------------------------------------

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs the CLI in-process with standard output and error silenced.
int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cfpanel");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::fflush(stdout);
  std::fflush(stderr);
  std::cout.flush();
  const int out = dup(1), err = dup(2);
  const int null = open("/dev/null", O_WRONLY);
  dup2(null, 1);
  dup2(null, 2);
  const int code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.flush();
  std::fflush(stdout);
  std::fflush(stderr);
  dup2(out, 1);
  dup2(err, 2);
  close(out);
  close(err);
  close(null);
  return code;
}

// Every file of `a` has an identical twin in `b`.
bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    ++files;
    const fs::path twin = b / e.path().filename();
    if (!fs::exists(twin) || read_file(e.path()) != read_file(twin)) {
      why = e.path().filename().string() + " differs";
      return false;
    }
  }
  if (files == 0) why = "no output files";
  return files > 0;
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / ("cfpanel-acceptance-" + std::to_string(getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(root / name) << text;
    return (root / name).string();
  };
  const std::string sim = write("sim.json", R"({"simulate": {"n1": 500, "nr": 500}})");
  if (cli({"simulate", "--design", "table2-nu2", "--config", sim, "--seed", "3", "--out", (root / "data").string(),
           "--threads", "1"}) != 0) {
    return {false, "simulate for the estimate inputs failed"};
  }
  const std::string est = write("est.json", R"({"data": {"panel": ")" + (root / "data/panel.csv").string() +
                                                R"(", "refreshment": ")" +
                                                (root / "data/refreshment.csv").string() +
                                                R"(", "export_measure": true},
      "model": {"name": "product-moment", "i": 0, "j": 2}, "bootstrap": {"B": 100}})");
  const std::string mc = write("mc.json", R"({"mc": {"S": 12, "sizes": [300]}})");
  const std::string cal = write("cal.json", R"({"calibrate": {"draws": 100000}})");
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
      {"estimate", {"estimate", "--config", est, "--seed", "4"}},
      {"estimate-full", {"estimate", "--config", est, "--seed", "4", "--grid", "full-product"}},
      {"simulate", {"simulate", "--design", "table2-nu2", "--config", sim, "--seed", "5"}},
      {"simulate-fe", {"simulate", "--design", "fe-attrition", "--seed", "5"}},
      {"replicate", {"replicate", "table1-m5", "--config", mc, "--seed", "6"}},
      {"replicate-fe", {"replicate", "fe-attrition", "--config", mc, "--seed", "6"}},
      {"calibrate", {"calibrate", "--design", "table2-nu2", "--config", cal}},
  };
  std::vector<std::string> checked;
  for (const auto& [tag, args] : commands) {
    for (const char* run : {"a", "b", "t8"}) {
      auto full = args;
      full.insert(full.end(), {"--out", (root / (tag + "-" + run)).string(), "--threads",
                               std::string(run) == "t8" ? "8" : "1"});
      const int code = cli(full);
      if (code != 0) return {false, tag + " exited with " + std::to_string(code)};
    }
    std::string why;
    if (!same_tree(root / (tag + "-a"), root / (tag + "-b"), why)) return {false, tag + " repeat: " + why};
    if (!same_tree(root / (tag + "-a"), root / (tag + "-t8"), why)) return {false, tag + " 1 vs 8 threads: " + why};
    checked.push_back(tag);
  }
  fs::remove_all(root);
  std::string list;
  for (const auto& c : checked) list += (list.empty() ? "" : ", ") + c;
  return {true, "byte-identical across two runs and 1 vs 8 threads: " + list};
}

// ---- fixed-effects model ---------------------------------------------------

Verdict fe_noiseless() {
  // y_t = alpha + t + 2 x_t exactly, everyone stays
  Rng rng = Rng::derive(501, {1});
  PanelDataset panel;
  panel.dim = 2;
  RefreshmentDataset refresh{PointSet(2)};
  for (int i = 0; i < 400; ++i) {
    const double alpha = static_cast<double>(rng.index(4));
    const double x1 = static_cast<double>(rng.index(3)), x2 = static_cast<double>(rng.index(3));
    const std::vector<double> z1{x1, alpha + 1 + 2 * x1}, z2{x2, alpha + 2 + 2 * x2};
    panel.units.push_back({std::to_string(i + 1), z1, z2});
    refresh.rows.push_back(z2);
  }
  const auto data = validate(panel, refresh);
  const auto model = twoway_fe_model(2, {0}, 1);
  const auto corrected = estimate_corrected(data, logit_link(), model);
  const double slope = twoway_fe_slopes(model, corrected.theta_hat)[0];
  return {std::abs(slope - 2.0) <= 1e-10, "corrected slope " + fmt(slope, 15)};
}

Verdict fe_study() {
  const Design d = named_design("fe-attrition");
  const McReport r = run(d, 200, {}, 601);
  const SizeReport& s = r.sizes[0];
  std::size_t closer = 0;
  for (const auto& o : s.outcomes) {
    if (o.ok && std::abs(o.corrected - r.theta_true) < std::abs(o.naive - r.theta_true)) ++closer;
  }
  info("fixed-effects design, n=2000, S=200", size_summary(r, s) + " slope=" + fmt(r.theta_true, 6));
  const double share = closer / 200.0;
  return {share >= 0.8, "corrected closer than naive in " + std::to_string(closer) + " of 200 replications"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance run"};
  app.add_option("--threads", g_threads, "worker threads")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  criterion("population identity", population_identity);
  criterion("ECDF mass recovery", ecdf_recovery);
  criterion("mass conservation", mass_conservation);
  criterion("h-invariance", h_invariance);
  criterion("discrete design replication", table1);
  criterion("continuous design replication", table2);
  criterion("root-n consistency", root_n);
  criterion("MCAR equivalence", mcar);
  criterion("CLI determinism", determinism);
  criterion("fixed-effects noiseless recovery", fe_noiseless);
  criterion("fixed-effects attrition study", fe_study);

  std::printf("%d criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
