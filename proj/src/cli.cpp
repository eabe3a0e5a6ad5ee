#include "cfpanel/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfpanel/config.hpp"
#include "cfpanel/dataio.hpp"
#include "cfpanel/error.hpp"
#include "cfpanel/estimator.hpp"
#include "cfpanel/harness.hpp"
#include "cfpanel/inference.hpp"
#include "cfpanel/link.hpp"
#include "cfpanel/measure.hpp"

namespace cfpanel {

namespace {

using nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNumerical = 2;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
  std::optional<std::string> grid;
  std::optional<std::string> link;
  std::optional<std::size_t> bootstrap;
  std::optional<std::size_t> reps;
  std::string design;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON configuration file (see the key list below)");
  cmd->add_option("--seed", f.seed, "master seed (overrides config 'seed')");
  cmd->add_option("--out", f.out, "output directory (overrides config 'out')");
  cmd->add_option("--threads", f.threads, "worker threads (overrides config 'threads')");
  cmd->add_option("--grid", f.grid, "paper-tuples | full-product (overrides config 'grid')");
  cmd->add_option("--link", f.link, "logit | exp (overrides config 'link')");
  cmd->add_option("--bootstrap", f.bootstrap, "bootstrap replicates B (overrides config 'bootstrap.B')");
}

RunConfig resolve(const Flags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.out) cfg.out = *f.out;
  if (f.threads) cfg.threads = *f.threads;
  if (f.grid) cfg.grid = *f.grid;
  if (f.link) cfg.link = *f.link;
  if (f.bootstrap) cfg.bootstrap_B = *f.bootstrap;
  if (f.reps) cfg.mc_S = *f.reps;
  if (!f.design.empty()) cfg.design.name = f.design;
  if (cfg.threads <= 0) cfg.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return cfg;
}

std::filesystem::path output_dir(const RunConfig& cfg) {
  const std::filesystem::path dir(cfg.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write file: " + path.string());
  out << text;
  if (!out) throw InputError("cannot write file: " + path.string());
}

ordered_json result_json(const EstimateResult& r) {
  ordered_json j;
  j["theta_hat"] = r.theta_hat;
  j["converged"] = r.converged;
  j["residual_norm"] = r.residual_norm;
  j["method"] = to_string(r.method);
  j["solver_iterations"] = r.solver_iterations;
  ordered_json d;
  d["total_mass"] = r.total_mass;
  d["negative_mass"] = r.negative_mass;
  d["clamp_events"] = r.clamp_events;
  d["grid_atoms"] = r.diagnostics.grid_atoms;
  d["dropped_atoms"] = r.diagnostics.dropped_atoms;
  d["dropped_mass"] = r.diagnostics.dropped_mass;
  d["top_corner_value"] = r.diagnostics.top_corner_value;
  j["diagnostics"] = d;
  return j;
}

EstimateOptions estimate_options(const RunConfig& cfg) {
  EstimateOptions o;
  o.grid = parse_grid_strategy(cfg.grid);
  o.tol = cfg.tol;
  o.max_iter = cfg.max_iter;
  o.threads = cfg.threads;
  return o;
}

int cmd_estimate(const RunConfig& cfg) {
  if (cfg.panel.empty()) throw InputError("no panel file given (config data.panel)");
  if (cfg.refreshment.empty()) throw InputError("no refreshment file given (config data.refreshment)");
  if (!std::filesystem::exists(cfg.panel)) throw InputError("panel file not found: " + cfg.panel);
  if (!std::filesystem::exists(cfg.refreshment)) throw InputError("refreshment file not found: " + cfg.refreshment);
  const ValidatedData data = validate(load_panel_csv(cfg.panel), load_refreshment_csv(cfg.refreshment));
  const LinkFunction link = LinkRegistry().get(cfg.link);
  const MomentModel model = build_model(cfg.model, data.dim);
  const EstimateOptions opts = estimate_options(cfg);
  const auto dir = output_dir(cfg);

  const EstimateResult naive = estimate_naive(data, model, opts);
  EstimateOptions copts = opts;
  if (naive.converged) copts.theta0 = naive.theta_hat;
  const EstimateResult corrected = estimate_corrected(data, link, model, copts);
  if (cfg.export_measure) {
    // the measure the estimate was computed from: full-product grids live on the positions the model reads
    const ValidatedData& source = copts.grid == GridStrategy::kFullProduct
                                      ? project_periods(data, used_positions(model, data.dim))
                                      : data;
    export_measure_csv(corrected_measure(source, link, copts).view(), dir / "measure.csv");
  }

  ordered_json j;
  ordered_json dj;
  dj["d"] = data.dim;
  dj["n1"] = data.n1;
  dj["n2"] = data.n2;
  dj["nr"] = data.nr;
  dj["attrition_rate"] = data.attrition_rate;
  j["data"] = dj;
  ordered_json oj;
  oj["link"] = cfg.link;
  oj["grid"] = cfg.grid;
  oj["model"] = cfg.model.name;
  oj["tol"] = cfg.tol;
  j["options"] = oj;
  j["corrected"] = result_json(corrected);
  j["naive"] = result_json(naive);
  if (cfg.bootstrap_B > 0) {
    const BootstrapResult b = bootstrap_ci(data, link, model, cfg.bootstrap_B, cfg.levels, opts, cfg.seed, cfg.threads);
    ordered_json bj;
    bj["B"] = b.B;
    bj["seed"] = cfg.seed;
    bj["failed_replicates"] = b.failed_replicates;
    bj["warning"] = b.warning;
    bj["intervals"] = ordered_json::array();
    for (std::size_t l = 0; l < b.levels.size(); ++l) {
      ordered_json iv;
      iv["level"] = b.levels[l];
      iv["lower"] = b.intervals[l].lower;
      iv["upper"] = b.intervals[l].upper;
      bj["intervals"].push_back(iv);
    }
    j["bootstrap"] = bj;
    if (!b.warning.empty()) std::cerr << "warning: " << b.warning << '\n';
  }
  const std::string text = j.dump(2) + "\n";
  write_text(dir / "estimate.json", text);
  std::cout << text;
  if (!corrected.converged) {
    std::cerr << "error: corrected estimator did not converge (residual " << format_double(corrected.residual_norm)
              << ")\n";
    return kExitNumerical;
  }
  return kExitOk;
}

ordered_json calibration_json(const Design& d) {
  ordered_json c;
  c["target_attrition"] = d.target_attrition;
  c["intercept"] = d.calibration.intercept;
  c["stay_rate"] = d.calibration.stay_rate;
  c["unclipped_stay_rate"] = d.calibration.unclipped_rate;
  c["clipped_mass"] = d.calibration.clipped_mass;
  c["iterations"] = d.calibration.iterations;
  return c;
}

int cmd_simulate(const RunConfig& cfg) {
  const Design design = build_design(cfg);
  const auto dir = output_dir(cfg);
  const SimulatedStudy st = simulate(design.spec, cfg.n1, cfg.nr, cfg.seed);
  write_panel_csv(st.panel, dir / "panel.csv");
  write_refreshment_csv(st.refreshment, dir / "refreshment.csv");
  double se = 0.0;
  const double theta = true_theta(design.spec, &se);
  ordered_json j;
  j["design"] = design.name;
  j["seed"] = cfg.seed;
  j["n1"] = cfg.n1;
  j["nr"] = cfg.nr;
  j["theta_true"] = theta;
  j["theta_true_se"] = se;
  j["attrition_rate"] = st.attrition_rate;
  j["calibration"] = calibration_json(design);
  if (std::holds_alternative<CopulaDgpSpec>(design.spec)) {
    std::vector<double> a, b;
    for (const auto& u : st.panel.units) {
      if (!u.stays()) continue;
      a.push_back(u.z1[0]);
      b.push_back((*u.z2)[0]);
    }
    j["kendall_tau_stayers"] = a.size() >= 2 ? kendall_tau(a, b) : 0.0;
  }
  const std::string text = j.dump(2) + "\n";
  write_text(dir / "simulate.json", text);
  std::cout << text;
  return kExitOk;
}

int cmd_replicate(const RunConfig& cfg) {
  if (cfg.design.name.empty() && cfg.design.kind.empty()) {
    std::string valid;
    for (const auto& n : design_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw InputError("no design given (valid: " + valid + ")");
  }
  const Design design = build_design(cfg);
  McConfig mc;
  mc.design = design;
  mc.S = cfg.mc_S;
  for (std::size_t n : cfg.mc_sizes) mc.sizes.push_back({n, n});
  mc.levels = cfg.levels;
  mc.seed = cfg.seed;
  mc.estimate = estimate_options(cfg);
  mc.threads = cfg.threads;
  const auto format = parse_report_format(cfg.mc_format);
  const auto dir = output_dir(cfg);
  const McReport report = run_mc(mc);
  emit_report(report, ReportFormat::kJson, dir / (design.name + ".json"));
  emit_report(report, ReportFormat::kCsv, dir / (design.name + ".csv"));
  emit_report(report, ReportFormat::kMarkdown, dir / (design.name + ".md"));
  switch (format) {
    case ReportFormat::kJson: std::cout << report_to_json(report); break;
    case ReportFormat::kCsv: std::cout << report_to_csv(report); break;
    case ReportFormat::kMarkdown: std::cout << report_to_markdown(report); break;
  }
  std::cerr << "wall_seconds=" << report.wall_seconds << '\n';
  return kExitOk;
}

int cmd_calibrate(const RunConfig& cfg) {
  const Design design = build_design(cfg);
  const auto dir = output_dir(cfg);
  ordered_json j;
  j["design"] = design.name;
  j["calibration"] = calibration_json(design);
  const std::string text = j.dump(2) + "\n";
  write_text(dir / "calibrate.json", text);
  std::cout << text;
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Attrition-corrected estimation for two-wave panels with a refreshment sample"};
  app.footer(config_help() +
             "\nExit codes: 0 success, 1 input or configuration error, 2 numerical failure.\n");
  app.require_subcommand(1);
  Flags flags;
  CLI::App* est = app.add_subcommand("estimate", "corrected and naive estimates from panel and refreshment CSVs");
  CLI::App* sim = app.add_subcommand("simulate", "draw a panel and refreshment sample from a design");
  CLI::App* rep = app.add_subcommand("replicate", "Monte Carlo study of a design (bias, rmse, mae, coverage)");
  CLI::App* cal = app.add_subcommand("calibrate", "calibrate a design's attrition intercept");
  for (CLI::App* c : {est, sim, rep, cal}) {
    add_common(c, flags);
    c->footer(config_help());
  }
  rep->add_option("design", flags.design, "named design");
  rep->add_option("--reps", flags.reps, "Monte Carlo replications S (overrides config 'mc.S')");
  sim->add_option("--design", flags.design, "named design");
  cal->add_option("--design", flags.design, "named design");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  const bool numeric_domain = est->parsed() || rep->parsed();
  try {
    const RunConfig cfg = resolve(flags);
    if (est->parsed()) return cmd_estimate(cfg);
    if (sim->parsed()) return cmd_simulate(cfg);
    if (rep->parsed()) return cmd_replicate(cfg);
    return cmd_calibrate(cfg);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return numeric_domain ? kExitNumerical : kExitInput;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
}

}  // namespace cfpanel
