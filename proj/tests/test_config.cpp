#include <string>
#include <variant>

#include "doctest.h"

#include "cfpanel/config.hpp"
#include "cfpanel/error.hpp"
#include "test_util.hpp"

using namespace cfpanel;

TEST_CASE("empty object gives the defaults") {
  const RunConfig c = parse_config("{}");
  CHECK(c.seed == 1);
  CHECK(c.threads == 0);
  CHECK(c.link == "logit");
  CHECK(c.grid == "paper-tuples");
  CHECK(c.model.name == "mean");
  CHECK(c.tol == 1e-10);
  CHECK(c.max_iter == 100);
  CHECK(c.bootstrap_B == 0);
  CHECK(c.levels == std::vector<double>{0.90, 0.95, 0.99});
  CHECK(c.n1 == 1000);
  CHECK(c.nr == 1000);
  CHECK(c.mc_format == "markdown-table");
}

TEST_CASE("nested keys are read") {
  const RunConfig c = parse_config(R"({"seed": 9, "grid": "full-product",
    "model": {"name": "product-moment", "i": 0, "j": 2},
    "bootstrap": {"B": 200, "levels": [0.8]},
    "design": {"kind": "copula", "nu": 3, "target_attrition": 0.5},
    "mc": {"S": 10, "sizes": [100, 200]}})");
  CHECK(c.seed == 9);
  CHECK(c.grid == "full-product");
  CHECK(c.model.j == 2u);
  CHECK(c.bootstrap_B == 200);
  CHECK(c.levels == std::vector<double>{0.8});
  CHECK(c.design.nu == 3.0);
  CHECK(c.design.target_attrition == 0.5);
  CHECK(c.mc_sizes == std::vector<std::size_t>{100, 200});
}

TEST_CASE("unknown keys and wrong types name the key") {
  CHECK_THROWS_WITH_AS(parse_config(R"({"sede": 1})"), doctest::Contains("unknown config key 'sede'"), InputError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"model": {"nmae": "mean"}})"),
                       doctest::Contains("unknown config key 'model.nmae'"), InputError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"seed": "one"})"), doctest::Contains("seed"), InputError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"solver": {"tol": [1]}})"), doctest::Contains("solver.tol"), InputError);
  CHECK_THROWS_AS(parse_config("{"), InputError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), InputError);
}

TEST_CASE("help lists every key") {
  const std::string help = config_help();
  for (const char* key : {"seed", "threads", "out", "link", "grid", "model.name", "model.index", "model.i",
                          "model.a", "model.x_indices", "model.y_index", "solver.tol", "solver.max_iter",
                          "bootstrap.B", "bootstrap.levels", "data.panel", "data.refreshment", "data.export_measure",
                          "design.name", "design.kind", "design.m", "design.transition", "design.transition_csv",
                          "design.stay_diag", "design.nu", "design.mu1", "design.cap_quantile", "design.stay_rate",
                          "design.c1", "design.intercept", "design.target_attrition", "simulate.n1", "mc.S",
                          "mc.sizes", "mc.levels", "mc.format", "calibrate.target_attrition", "calibrate.tol",
                          "calibrate.draws"}) {
    CHECK_MESSAGE(help.find(key) != std::string::npos, key);
  }
}

TEST_CASE("models and designs from configuration") {
  CHECK(build_model(ModelConfig{}, 2).dim_z == 4);
  ModelConfig fe;
  fe.name = "twoway-fe";
  CHECK(build_model(fe, 2).name.find("twoway") != std::string::npos);
  ModelConfig bad;
  bad.name = "median";
  CHECK_THROWS_AS(build_model(bad, 1), InputError);

  RunConfig c = parse_config(R"({"design": {"kind": "discrete", "m": 4, "target_attrition": 0.3}})");
  const Design d = build_design(c);
  CHECK(std::get<DiscreteDgpSpec>(d.spec).m == 4);
  CHECK(std::abs(d.calibration.stay_rate - 0.7) <= 1e-4);

  const auto dir = testutil::temp_dir("config");
  const auto csv = testutil::write_text(dir, "t.csv", "0.5,0.5\n0.25,0.75\n");
  c = parse_config(R"({"design": {"kind": "discrete", "m": 2, "transition_csv": ")" + csv.string() + R"("}})");
  CHECK(std::get<DiscreteDgpSpec>(build_design(c).spec).transition[1][1] == 0.75);

  c = parse_config(R"({"design": {"name": "fe-attrition"}})");
  CHECK(build_design(c).name == "fe-attrition");
  c = parse_config(R"({"design": {"kind": "spline"}})");
  CHECK_THROWS_AS(build_design(c), InputError);
}
