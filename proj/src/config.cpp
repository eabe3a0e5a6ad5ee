#include "cfpanel/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cfpanel/error.hpp"

namespace cfpanel {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw InputError("config key '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) {
      throw InputError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
    }
  }
}

template <typename T>
void read(const json& obj, const char* key, const std::string& where, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError("config key '" + (where.empty() ? std::string(key) : where + "." + key) +
                     "' has the wrong type");
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, const std::string& where, std::optional<T>& out) {
  if (!obj.contains(key)) return;
  T v{};
  read(obj, key, where, v);
  out = v;
}

std::vector<std::vector<double>> read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open transition matrix file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw InputError("transition matrix file " + path + ": cannot parse '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("config parse error: ") + e.what());
  }
  RunConfig c;
  check_keys(j, "", {"seed", "threads", "out", "link", "grid", "model", "solver", "bootstrap", "data", "design",
                     "simulate", "mc", "calibrate"});
  read(j, "seed", "", c.seed);
  read(j, "threads", "", c.threads);
  read(j, "out", "", c.out);
  read(j, "link", "", c.link);
  read(j, "grid", "", c.grid);
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, "model", {"name", "index", "i", "j", "a", "b", "x_indices", "y_index"});
    read(m, "name", "model", c.model.name);
    read(m, "index", "model", c.model.index);
    read_opt(m, "i", "model", c.model.i);
    read_opt(m, "j", "model", c.model.j);
    read(m, "a", "model", c.model.a);
    read(m, "b", "model", c.model.b);
    read(m, "x_indices", "model", c.model.x_indices);
    read(m, "y_index", "model", c.model.y_index);
  }
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    check_keys(s, "solver", {"tol", "max_iter"});
    read(s, "tol", "solver", c.tol);
    read(s, "max_iter", "solver", c.max_iter);
  }
  if (j.contains("bootstrap")) {
    const auto& b = j["bootstrap"];
    check_keys(b, "bootstrap", {"B", "levels"});
    read(b, "B", "bootstrap", c.bootstrap_B);
    read(b, "levels", "bootstrap", c.levels);
  }
  if (j.contains("data")) {
    const auto& d = j["data"];
    check_keys(d, "data", {"panel", "refreshment", "export_measure"});
    read(d, "panel", "data", c.panel);
    read(d, "refreshment", "data", c.refreshment);
    read(d, "export_measure", "data", c.export_measure);
  }
  if (j.contains("design")) {
    const auto& d = j["design"];
    check_keys(d, "design", {"name", "kind", "m", "transition", "transition_csv", "stay_diag", "nu", "mu1", "mu2",
                             "cap_quantile", "stay_rate", "c1", "c2", "intercept", "target_attrition"});
    auto& g = c.design;
    read(d, "name", "design", g.name);
    read(d, "kind", "design", g.kind);
    read(d, "m", "design", g.m);
    read(d, "transition", "design", g.transition);
    read(d, "transition_csv", "design", g.transition_csv);
    read(d, "stay_diag", "design", g.stay_diag);
    read(d, "nu", "design", g.nu);
    read(d, "mu1", "design", g.mu1);
    read(d, "mu2", "design", g.mu2);
    read(d, "cap_quantile", "design", g.cap_quantile);
    read(d, "stay_rate", "design", g.stay_rate);
    read_opt(d, "c1", "design", g.c1);
    read_opt(d, "c2", "design", g.c2);
    read(d, "intercept", "design", g.intercept);
    read_opt(d, "target_attrition", "design", g.target_attrition);
  }
  if (j.contains("simulate")) {
    const auto& s = j["simulate"];
    check_keys(s, "simulate", {"n1", "nr"});
    read(s, "n1", "simulate", c.n1);
    read(s, "nr", "simulate", c.nr);
  }
  if (j.contains("mc")) {
    const auto& s = j["mc"];
    check_keys(s, "mc", {"S", "sizes", "levels", "format"});
    read(s, "S", "mc", c.mc_S);
    read(s, "sizes", "mc", c.mc_sizes);
    read(s, "levels", "mc", c.levels);
    read(s, "format", "mc", c.mc_format);
  }
  if (j.contains("calibrate")) {
    const auto& s = j["calibrate"];
    check_keys(s, "calibrate", {"target_attrition", "tol", "draws"});
    read_opt(s, "target_attrition", "calibrate", c.design.target_attrition);
    read(s, "tol", "calibrate", c.calibrate_tol);
    read(s, "draws", "calibrate", c.calibrate_draws);
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_help() {
  return R"(Configuration file (JSON; every key optional, unknown keys are errors):
  seed                      u64, default 1; all randomness derives from it
  threads                   int, default 0 = logical CPU count
  out                       output directory, default "."
  link                      logit | exp, default logit
  grid                      paper-tuples | full-product, default paper-tuples
  model.name                mean | product-moment | cond-prob | twoway-fe, default mean
  model.index               mean: coordinate of z = (z1, z2), default 0
  model.i, model.j          product-moment: coordinates, default 0 and d
  model.a, model.b          cond-prob: P(z2[0] = a | z1[0] = b), defaults 1, 1
  model.x_indices           twoway-fe: regressor positions within a period, default [0]
  model.y_index             twoway-fe: outcome position within a period, default 1
  solver.tol                sup-norm tolerance on the moments, default 1e-10
  solver.max_iter           Newton iteration cap, default 100
  bootstrap.B               bootstrap replicates for estimate, default 0 (off); >= 100 when on
  bootstrap.levels          confidence levels, default [0.9, 0.95, 0.99]
  data.panel                panel CSV (id,w,z1_1..z1_d,z2_1..z2_d)
  data.refreshment          refreshment CSV (z2_1..z2_d)
  data.export_measure       also write the signed measure as measure.csv, default false
  design.name               table1-m5 | table1-m10 | table1-m15 | table2-nu2 | table2-nu10 |
                            table2-nu20 | fe-attrition; overrides the custom keys below
  design.kind               discrete | copula | fe (custom design)
  design.m                  discrete: support size, default 5
  design.transition         discrete: m x m row-stochastic matrix, default banded
  design.transition_csv     discrete: matrix from a CSV file instead
  design.stay_diag          discrete: diagonal of the banded default matrix, default 0.23
  design.nu                 copula: Gumbel parameter, default 2
  design.mu1, design.mu2    copula: exponential means, default 1, 1
  design.cap_quantile       copula: attrition index cap quantile, default 0.99
  design.stay_rate          fe: stayer share, default 0.6
  design.c1, design.c2      attrition slopes, defaults 0.5/m (discrete), 0.03 (copula), -0.1 (fe)
  design.intercept          attrition intercept, default 0 (replaced by calibration)
  design.target_attrition   calibrate the intercept to this rate, default none
  simulate.n1, simulate.nr  sample sizes, default 1000, 1000
  mc.S                      Monte Carlo replications, default: the design's (1000, 500 or 200)
  mc.sizes                  sample sizes n1 = nr to run, default: the design's
  mc.levels                 coverage levels, default [0.9, 0.95, 0.99]
  mc.format                 markdown-table | json | csv for the printed report, default markdown-table
  calibrate.target_attrition  same as design.target_attrition
  calibrate.tol             calibration tolerance on the rate, default 1e-4
  calibrate.draws           quadrature draws for the copula design, default 1000000
)";
}

MomentModel build_model(const ModelConfig& mc, std::size_t d) {
  if (mc.name == "mean") return mean_model(2 * d, mc.index);
  if (mc.name == "product-moment") return product_moment_model(2 * d, mc.i.value_or(0), mc.j.value_or(d));
  if (mc.name == "cond-prob") return cond_prob_model(d, mc.a, mc.b);
  if (mc.name == "twoway-fe") return twoway_fe_model(d, mc.x_indices, mc.y_index);
  throw InputError("unknown model '" + mc.name + "' (valid: mean, product-moment, cond-prob, twoway-fe)");
}

Design build_design(const RunConfig& cfg) {
  const DesignConfig& g = cfg.design;
  if (!g.name.empty()) return named_design(g.name, cfg.calibrate_draws);
  const LinkFunction link = LinkRegistry().get(cfg.link);
  Design d;
  d.name = "custom-" + g.kind;
  if (g.kind == "discrete") {
    DiscreteDgpSpec s;
    s.m = g.m;
    if (!g.transition_csv.empty()) {
      s.transition = read_matrix_csv(g.transition_csv);
    } else if (!g.transition.empty()) {
      s.transition = g.transition;
    } else {
      s.transition = banded_transition(g.m, g.stay_diag);
    }
    s.c1 = g.c1.value_or(0.5 / static_cast<double>(g.m));
    s.c2 = g.c2.value_or(0.5 / static_cast<double>(g.m));
    s.intercept = g.intercept;
    s.link = link;
    if (g.target_attrition) {
      d.calibration = calibrate_attrition(s, *g.target_attrition, cfg.calibrate_tol);
      d.target_attrition = *g.target_attrition;
    } else {
      d.calibration.stay_rate = build_lattice(s).stay_rate;
      d.calibration.unclipped_rate = d.calibration.stay_rate;
      d.calibration.intercept = s.intercept;
      d.target_attrition = 1.0 - d.calibration.stay_rate;
    }
    d.spec = s;
    d.model = cond_prob_model(1, 1.0, 1.0);
    d.relative_bias = true;
  } else if (g.kind == "copula") {
    CopulaDgpSpec s;
    s.nu = g.nu;
    s.mu1 = g.mu1;
    s.mu2 = g.mu2;
    s.cap_quantile = g.cap_quantile;
    s.c1 = g.c1.value_or(0.03);
    s.c2 = g.c2.value_or(0.03);
    s.intercept = g.intercept;
    s.link = link;
    if (g.target_attrition) {
      d.calibration = calibrate_attrition(s, *g.target_attrition, cfg.calibrate_tol, cfg.calibrate_draws);
      d.target_attrition = *g.target_attrition;
    } else {
      check_spec(s);
      d.calibration.intercept = s.intercept;
      d.calibration.unclipped_rate = unclipped_stay_rate(s);
      d.calibration.stay_rate = d.calibration.unclipped_rate;
      d.target_attrition = 1.0 - d.calibration.stay_rate;
    }
    d.spec = s;
    d.model = product_moment_model(4, 0, 2);
    d.S = 500;
  } else if (g.kind == "fe") {
    FeDgpSpec s;
    s.c1 = g.c1.value_or(-0.1);
    s.c2 = g.c2.value_or(-0.1);
    s.stay_rate = g.stay_rate;
    s.link = link;
    (void)build_lattice(s);
    d.spec = s;
    d.target_attrition = 1.0 - s.stay_rate;
    d.calibration.stay_rate = s.stay_rate;
    d.model = twoway_fe_model(2, {0}, 1);
    d.target_index = 2;
    d.S = 200;
  } else if (g.kind.empty()) {
    throw InputError("no design given: set design.name or design.kind");
  } else {
    throw InputError("unknown design kind '" + g.kind + "' (valid: discrete, copula, fe)");
  }
  d.n1 = cfg.n1;
  d.nr = cfg.nr;
  return d;
}

}  // namespace cfpanel
