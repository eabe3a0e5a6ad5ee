#include <cmath>
#include <limits>

#include "doctest.h"

#include "cfpanel/dataio.hpp"
#include "cfpanel/error.hpp"
#include "cfpanel/rng.hpp"
#include "test_util.hpp"

using namespace cfpanel;

TEST_CASE("panel with two stayers out of three") {
  const auto dir = testutil::temp_dir("dataio");
  const auto path = testutil::write_text(dir, "panel.csv",
                                         "id,w,z1_1,z2_1\n"
                                         "a,1,1.5,2\n"
                                         "b,0,3,\n"
                                         "c,1,4,5\n");
  const PanelDataset p = load_panel_csv(path);
  CHECK(p.dim == 1);
  CHECK(p.n1() == 3);
  CHECK(p.n2() == 2);
  CHECK(p.units[0].id == "a");
  CHECK(p.units[1].z1[0] == 3.0);
  // blank z2 on a leaver is stored as absent
  CHECK_FALSE(p.units[1].z2.has_value());
  CHECK((*p.units[2].z2)[0] == 5.0);
}

TEST_CASE("columns are addressed by header name") {
  const auto dir = testutil::temp_dir("dataio");
  const auto path = testutil::write_text(dir, "panel.csv",
                                         "z2_2,z1_2,w,z2_1,id,z1_1\n"
                                         "8,6,1,7,u,5\n");
  const PanelDataset p = load_panel_csv(path);
  REQUIRE(p.dim == 2);
  CHECK(p.units[0].z1 == std::vector<double>{5, 6});
  CHECK(*p.units[0].z2 == std::vector<double>{7, 8});
}

TEST_CASE("stayer with blank z2 is a consistency error naming the row") {
  const auto dir = testutil::temp_dir("dataio");
  const auto path = testutil::write_text(dir, "panel.csv", "id,w,z1_1,z2_1\na,1,1,2\nb,1,3,\n");
  try {
    load_panel_csv(path);
    FAIL("expected an error");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("consistency") != std::string::npos);
    CHECK(msg.find("row 2") != std::string::npos);
  }
}

TEST_CASE("leaver with z2 present is a consistency error") {
  const auto dir = testutil::temp_dir("dataio");
  const auto path = testutil::write_text(dir, "panel.csv", "id,w,z1_1,z2_1\na,0,1,2\n");
  CHECK_THROWS_WITH_AS(load_panel_csv(path), doctest::Contains("consistency"), InputError);
}

TEST_CASE("missing column and non-numeric cells") {
  const auto dir = testutil::temp_dir("dataio");
  const auto no_w = testutil::write_text(dir, "a.csv", "id,z1_1,z2_1\na,1,2\n");
  CHECK_THROWS_WITH_AS(load_panel_csv(no_w), doctest::Contains("missing column 'w'"), InputError);
  const auto bad = testutil::write_text(dir, "b.csv", "id,w,z1_1,z2_1\na,1,1,2\nb,1,x,2\n");
  CHECK_THROWS_WITH_AS(load_panel_csv(bad), doctest::Contains("row 2"), InputError);
  const auto bad_w = testutil::write_text(dir, "c.csv", "id,w,z1_1,z2_1\na,2,1,2\n");
  CHECK_THROWS_AS(load_panel_csv(bad_w), InputError);
  CHECK_THROWS_AS(load_panel_csv(dir / "absent.csv"), InputError);
}

TEST_CASE("refreshment loading") {
  const auto dir = testutil::temp_dir("dataio");
  const auto two = testutil::write_text(dir, "r.csv", "z2_1\n0.5\n2\n");
  const RefreshmentDataset r = load_refreshment_csv(two);
  CHECK(r.rows.size() == 2);
  CHECK(r.rows.dim() == 1);
  CHECK(r.rows[1][0] == 2.0);

  const auto empty = testutil::write_text(dir, "e.csv", "");
  CHECK_THROWS_WITH_AS(load_refreshment_csv(empty), doctest::Contains("refreshment sample empty"), InputError);
  const auto header_only = testutil::write_text(dir, "h.csv", "z2_1\n");
  CHECK_THROWS_WITH_AS(load_refreshment_csv(header_only), doctest::Contains("refreshment sample empty"),
                       InputError);

  const auto three = testutil::write_text(dir, "t.csv", "z2_1,z2_2,z2_3\n1,2,3\n");
  CHECK_THROWS_WITH_AS(load_refreshment_csv(three, RefreshmentSchema::standard(2)),
                       doctest::Contains("schema error"), InputError);
}

TEST_CASE("validate reports counts and the exact attrition rate") {
  const auto v = testutil::make_data(1, {{{1}, {2}}, {{3}, {}}, {{4}, {5}}}, {{2}, {6}});
  CHECK(v.n1 == 3);
  CHECK(v.n2 == 2);
  CHECK(v.nr == 2);
  CHECK(v.dim == 1);
  CHECK(v.attrition_rate == 1.0 - 2.0 / 3.0);
  CHECK(v.stayers_joint().size() == 2);
  CHECK(v.stayers_joint()[1][1] == 5.0);
  CHECK(v.first_wave().size() == 3);
}

TEST_CASE("validate rejects dimension mismatch and non-finite values") {
  CHECK_THROWS_WITH_AS(testutil::make_data(2, {{{1, 1}, {2, 2}}}, {}), doctest::Contains("empty"), InputError);

  PanelDataset panel;
  panel.dim = 2;
  panel.units.push_back({"a", {1, 2}, std::vector<double>{3, 4}});
  RefreshmentDataset r{PointSet(1, {1.0})};
  CHECK_THROWS_WITH_AS(validate(panel, r), doctest::Contains("dimension error"), InputError);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(testutil::make_data(1, {{{1}, {2}}, {{nan}, {}}}, {{1}}),
                       doctest::Contains("row 2, z1_1"), InputError);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_WITH_AS(testutil::make_data(1, {{{1}, {2}}}, {{inf}}), doctest::Contains("refreshment row 1"),
                       InputError);
}

TEST_CASE("format_double round-trips bit-exactly") {
  auto rng = Rng::derive(7, {1});
  for (int i = 0; i < 2000; ++i) {
    const double x = (rng.uniform() - 0.5) * std::pow(10.0, static_cast<int>(rng.index(40)) - 20);
    CHECK(std::stod(format_double(x)) == x);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
}

TEST_CASE("writing and reloading yields identical rows") {
  auto rng = Rng::derive(11, {2});
  std::vector<testutil::Unit> units;
  std::vector<std::vector<double>> refresh;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> z1{rng.uniform() * 10, -rng.exponential()};
    if (rng.bernoulli(0.6) || i == 0) {
      units.push_back({z1, std::vector<double>{rng.uniform() / 3, rng.exponential(2.5)}});
    } else {
      units.push_back({z1, {}});
    }
    refresh.push_back({rng.uniform() * 1e-7, rng.exponential() * 1e9});
  }
  const auto v = testutil::make_data(2, units, refresh);
  const auto dir = testutil::temp_dir("dataio");
  write_panel_csv(v.panel, dir / "panel.csv");
  write_refreshment_csv(v.refreshment, dir / "refresh.csv");
  const auto back = validate(load_panel_csv(dir / "panel.csv"), load_refreshment_csv(dir / "refresh.csv"));
  REQUIRE(back.n1 == v.n1);
  REQUIRE(back.n2 == v.n2);
  for (std::size_t i = 0; i < v.n1; ++i) {
    CHECK(back.panel.units[i].id == v.panel.units[i].id);
    CHECK(back.panel.units[i].z1 == v.panel.units[i].z1);
    CHECK(back.panel.units[i].z2 == v.panel.units[i].z2);
  }
  CHECK(back.refreshment.rows.values() == v.refreshment.rows.values());
}
