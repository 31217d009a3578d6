#include <doctest.h>

#include <cmath>
#include <numbers>

#include "reachcls/evalset.hpp"
#include "reachcls/oracle.hpp"
#include "reachcls/rng.hpp"
#include "test_util.hpp"

using namespace reachcls;

namespace {

CostSpec origin_box_cost() { return CostSpec(ImplicitSurface::box({0.0, 0.0}, {1.0, 1.0})); }

GridSpec square_grid(int points) { return GridSpec({-3.0, -3.0}, {3.0, 3.0}, {points, points}); }

std::size_t node_index(const GridSpec& g, std::initializer_list<int> idx) {
  std::size_t q = 0;
  std::size_t i = 0;
  for (int v : idx) q = q * static_cast<std::size_t>(g.points[i++]) + static_cast<std::size_t>(v);
  return q;
}

// 1D system ds/dt = d (control has no effect) for rule tests.
ModelPtr pushed_line(double gain) {
  Matrix g(1, 1);
  g(0, 0) = gain;
  return make_linear_model(Matrix(1, 1), Vec{0.0}, Matrix(1, 1), g, IntervalBounds::symmetric(1, 1.0),
                           IntervalBounds::symmetric(1, 1.0), IntervalBounds::symmetric(1, 2.0));
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("grid geometry and ordering") {
  const GridSpec g({-1.0, 0.0}, {1.0, 2.0}, {3, 5});
  CHECK(g.node_count() == 15);
  CHECK(g.spacing(0) == doctest::Approx(1.0));
  CHECK(g.spacing(1) == doctest::Approx(0.5));
  CHECK(g.node(0) == Vec{-1.0, 0.0});
  CHECK(g.node(1) == Vec{-1.0, 0.5});  // last dimension varies fastest
  CHECK(g.node(5) == Vec{0.0, 0.0});
  CHECK(g.node(14) == Vec{1.0, 2.0});
  CHECK(g.cell_diameter() == doctest::Approx(std::sqrt(1.25)));
  const GridSpec p({-std::numbers::pi}, {std::numbers::pi}, {8}, {1});
  CHECK(p.coord(0, 7) == doctest::Approx(std::numbers::pi * 0.75));
  const GridSpec slice({-1.0, 0.5}, {1.0, 0.5}, {3, 1});
  CHECK(slice.node_count() == 3);
  CHECK(slice.cell_diameter() == doctest::Approx(1.0));
}

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(GridSpec({0.0}, {1.0, 2.0}, {3}), InvalidArgument);
  CHECK_THROWS_AS(GridSpec({1.0}, {0.0}, {3}), InvalidArgument);
  CHECK_THROWS_AS(GridSpec({0.0}, {1.0}, {0}), InvalidArgument);
  CHECK_THROWS_AS(GridSpec({0.0}, {1.0}, {1}), InvalidArgument);
  CHECK_NOTHROW(GridSpec({0.5}, {0.5}, {1}));
  CHECK_THROWS_AS(GridSpec({0.0}, {1.0}, {4}).validate_oracle(), InvalidArgument);
  CHECK_THROWS_AS(GridSpec({0.5}, {0.5}, {1}).validate_oracle(), InvalidArgument);
  CHECK_NOTHROW(GridSpec({0.0}, {1.0}, {5}).validate_oracle());
  nlohmann::json j = square_grid(5).to_json();
  CHECK(GridSpec::from_json(j) == square_grid(5));
  j["points"] = {5};
  CHECK_THROWS_AS(GridSpec::from_json(j, "oracle.grid"), ConfigError);
}

TEST_CASE("interpolation: nodes, edge midpoints, constants") {
  const GridSpec g({0.0, 0.0}, {2.0, 1.0}, {3, 2});
  const Vec values{1.0, 2.0, 3.0, 5.0, 7.0, 11.0};
  for (std::size_t q = 0; q < g.node_count(); ++q) CHECK(interp(g, values, g.node(q)) == values[q]);
  CHECK(interp(g, values, Vec{0.5, 0.0}) == doctest::Approx(2.0));  // between 1 and 3
  CHECK(interp(g, values, Vec{1.0, 0.5}) == doctest::Approx(4.0));  // between 3 and 5
  const Vec flat(6, -0.25);
  CHECK(interp(g, flat, Vec{1.3, 0.77}) == doctest::Approx(-0.25));
  bool clamped = false;
  CHECK(interp(g, values, Vec{5.0, 0.0}, &clamped) == values[4]);
  CHECK(clamped);
  interp(g, values, Vec{1.0, 0.2}, &clamped);
  CHECK_FALSE(clamped);
}

TEST_CASE("interpolation is exact for multilinear functions") {
  const GridSpec g({-1.0, 0.0, 2.0}, {1.0, 3.0, 4.0}, {5, 4, 3});
  auto f = [](std::span<const double> x) { return 0.5 + x[0] - 2.0 * x[1] + 0.3 * x[0] * x[2] - x[0] * x[1] * x[2]; };
  Vec values(g.node_count());
  for (std::size_t q = 0; q < values.size(); ++q) values[q] = f(g.node(q));
  Rng r(3);
  for (int i = 0; i < 200; ++i) {
    const Vec s{r.uniform(-1.0, 1.0), r.uniform(0.0, 3.0), r.uniform(2.0, 4.0)};
    CHECK(interp(g, values, s) == doctest::Approx(f(s)).epsilon(1e-12));
  }
}

TEST_CASE("periodic dimensions wrap") {
  const double pi = std::numbers::pi;
  const GridSpec g({-pi}, {pi}, {4}, {1});  // nodes at -pi, -pi/2, 0, pi/2
  const Vec values{10.0, 20.0, 30.0, 40.0};
  CHECK(interp(g, values, Vec{0.75 * pi}) == doctest::Approx(25.0));  // halfway from 40 back to 10
  CHECK(interp(g, values, Vec{-pi + 2 * pi}) == doctest::Approx(10.0));
  bool clamped = true;
  CHECK(interp(g, values, Vec{5.0 * pi / 2}, &clamped) == doctest::Approx(40.0));
  CHECK_FALSE(clamped);
}

TEST_CASE("point2d: the origin sits at the target's own value") {
  const auto m = make_point2d(IntervalBounds::symmetric(2, 1.0));
  const auto vg = grid_solve(*m, origin_box_cost(), square_grid(61), TimeGrid{0.1, 40, 1});
  CHECK(vg.interp(Vec{0.0, 0.0}) == doctest::Approx(-1.0));
  CHECK(vg.model_name == "point2d");
  CHECK(vg.mode == CostMode::ReachAvoid);
}

TEST_CASE("point2d: time to reach matches straight-line motion") {
  const auto m = make_point2d(IntervalBounds::symmetric(2, 1.0));
  const GridSpec grid = square_grid(61);
  OracleOptions opts;
  opts.retain_all = true;
  opts.early_stop_tolerance = 0.0;
  const auto vg = grid_solve(*m, origin_box_cost(), grid, TimeGrid{0.1, 20, 1}, opts);
  REQUIRE(vg.retains_all());
  const std::size_t q = node_index(grid, {55, 30});  // (2.5, 0)
  CHECK(grid.node(q)[0] == doctest::Approx(2.5));
  // Distance 1.5 to the box edge at unit speed: 15 steps of 0.1.
  CHECK(vg.values_at(15)[q] <= 1e-9);
  CHECK(vg.values_at(14)[q] > 0.0);
  CHECK(vg.values_at(14)[q] <= grid.cell_diameter());
}

TEST_CASE("backups are monotone in k") {
  const auto m = make_point2d(IntervalBounds::symmetric(2, 0.5));
  const CostSpec ra(ImplicitSurface::box({0.0, 0.0}, {1.0, 1.0}),
                    ImplicitSurface::intersection_of({ImplicitSurface::box({0.0, 0.0}, {3.0, 3.0}),
                                                      ImplicitSurface::bounds_complement({-2.0, 0.5}, {-1.5, 2.5})}));
  OracleOptions opts;
  opts.retain_all = true;
  const auto vg = grid_solve(*m, ra, square_grid(31), TimeGrid{0.1, 15, 1}, opts);
  for (std::size_t k = 1; k < vg.history.size(); ++k) {
    for (std::size_t q = 0; q < vg.history[k].size(); ++q) CHECK(vg.history[k][q] <= vg.history[k - 1][q] + 1e-12);
  }
  const auto x = make_quad_rel_x();
  const CostSpec mt(ImplicitSurface::sphere({0.0}, 0.0, {0}), std::nullopt, CostMode::MaxTracking);
  const auto vt = grid_solve(*x, mt, GridSpec({-1.0, -1.0}, {1.0, 1.0}, {21, 21}), TimeGrid{0.05, 10, 1}, opts);
  for (std::size_t k = 1; k < vt.history.size(); ++k) {
    for (std::size_t q = 0; q < vt.history[k].size(); ++q) CHECK(vt.history[k][q] >= vt.history[k - 1][q] - 1e-12);
  }
}

TEST_CASE("early stop on a fixed point") {
  const auto m = make_point2d(IntervalBounds::symmetric(2, 1.0));
  const auto vg = grid_solve(*m, origin_box_cost(), square_grid(31), TimeGrid{0.1, 200, 1});
  CHECK(vg.converged);
  CHECK(vg.steps_run < 200);
  CHECK(vg.values_at(150) == vg.values());
  CHECK_THROWS_AS(vg.values_at(1), InvalidArgument);  // history not retained
}

TEST_CASE("max tracking without disturbance capability is refinement-consistent") {
  QuadParams p;
  p.disturbance_bound = 0.0;
  p.planner_bound = 0.0;
  const auto m = make_quad_rel_x(p);
  const CostSpec mt(ImplicitSurface::sphere({0.0}, 0.0, {0}), std::nullopt, CostMode::MaxTracking);
  const TimeGrid tg{0.05, 30, 1};
  const GridSpec coarse({-1.0, -1.0}, {1.0, 1.0}, {21, 21});
  const GridSpec fine({-1.0, -1.0}, {1.0, 1.0}, {41, 41});
  const auto vc = grid_solve(*m, mt, coarse, tg);
  const auto vf = grid_solve(*m, mt, fine, tg);
  CHECK(vc.interp(Vec{0.0, 0.0}) >= 0.0);
  // Corner-only tilt cannot hold the origin exactly, so the value is small but positive.
  CHECK(vf.interp(Vec{0.0, 0.0}) >= 0.0);
  CHECK(vf.interp(Vec{0.0, 0.0}) <= coarse.cell_diameter());
  for (const Vec& s : {Vec{0.0, 0.0}, Vec{0.3, 0.2}, Vec{-0.5, 0.4}, Vec{0.1, -0.6}}) {
    // l is 1-Lipschitz, so refinement moves values by at most the coarse cell diameter.
    CHECK(std::fabs(vc.interp(s) - vf.interp(s)) <= coarse.cell_diameter());
    CHECK(vf.interp(s) >= std::fabs(s[0]) - 1e-12);
  }
}

TEST_CASE("disturbance rule: monotone value picks d_max, zero columns pick d_min") {
  const CostSpec up(ImplicitSurface::half_space({1.0}, 0.0), std::nullopt, CostMode::MaxTracking);
  const GridSpec grid({-2.0}, {2.0}, {41});
  const TimeGrid tg{0.1, 5, 1};
  {
    const auto m = pushed_line(1.0);
    auto vg = std::make_shared<const ValueGrid>(grid_solve(*m, up, grid, tg));
    const auto rule = grid_disturbance_rule(vg, m);
    CHECK(rule.name == "grid_value");
    Rng r(1);
    for (int i = 0; i < 100; ++i) {
      const Vec s{r.uniform(-1.5, 1.5)};
      Vec d(1);
      rule.rule(s, 3, d);
      CHECK(d[0] == 1.0);
    }
  }
  {
    const auto m = pushed_line(0.0);
    auto vg = std::make_shared<const ValueGrid>(grid_solve(*m, up, grid, tg));
    const auto rule = grid_disturbance_rule(vg, m);
    Vec d(1);
    rule.rule(Vec{0.3}, 2, d);
    CHECK(d[0] == -1.0);
  }
  const auto other = make_point2d(IntervalBounds::symmetric(2, 1.0));
  auto vg1 = std::make_shared<const ValueGrid>(grid_solve(*pushed_line(1.0), up, grid, tg));
  CHECK_THROWS_AS(grid_disturbance_rule(vg1, other), InvalidArgument);
}

TEST_CASE("disturbance rule on the quadrotor subsystem matches direct recomputation") {
  const auto m = make_quad_rel_x();
  const CostSpec mt(ImplicitSurface::sphere({0.0}, 0.0, {0}), std::nullopt, CostMode::MaxTracking);
  OracleOptions opts;
  opts.retain_all = true;
  const TimeGrid tg{0.1, 20, 1};
  auto vg = std::make_shared<const ValueGrid>(
      grid_solve(*m, mt, GridSpec({-3.0, -2.0}, {3.0, 2.0}, {61, 41}), tg, opts));
  const auto rule = grid_disturbance_rule(vg, m);
  Rng r(8);
  for (int i = 0; i < 1000; ++i) {
    const Vec s{r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0)};
    const int k = static_cast<int>(r.below(20));
    Vec d(2);
    rule.rule(s, k, d);
    // Worst-case value over the disturbance corners.
    double best = -INFINITY;
    Vec best_d;
    for (std::size_t b = 0; b < 4; ++b) {
      const Vec dc = m->d_bounds().corner(b);
      double inner = INFINITY;
      for (std::size_t a = 0; a < 2; ++a) {
        const Vec next = integrate_step(*m, s, m->u_bounds().corner(a), dc, tg.dt, 1);
        inner = std::min(inner, vg->interp_at(k, next));
      }
      if (inner > best) {
        best = inner;
        best_d = dc;
      }
    }
    CHECK(d == best_d);
  }
}

TEST_CASE("dimension limit") {
  const auto m = make_quad6d_relative();
  const CostSpec mt(ImplicitSurface::sphere({0.0, 0.0, 0.0}, 0.0), std::nullopt, CostMode::MaxTracking);
  const GridSpec g(Vec(6, -1.0), Vec(6, 1.0), std::vector<int>(6, 3));
  try {
    grid_solve(*m, mt, g, TimeGrid{0.1, 1, 1});
    FAIL("expected refusal");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("limited to 4") != std::string::npos);
  }
  const auto p = make_point2d(IntervalBounds::symmetric(2, 1.0));
  CHECK_THROWS_AS(grid_solve(*p, origin_box_cost(), GridSpec({-1.0}, {1.0}, {3}), TimeGrid{0.1, 1, 1}),
                  InvalidArgument);
}

TEST_CASE("value grid files round trip") {
  const auto m = make_point2d(IntervalBounds::symmetric(2, 1.0));
  OracleOptions opts;
  opts.retain_all = true;
  const auto vg = grid_solve(*m, origin_box_cost(), square_grid(11), TimeGrid{0.2, 4, 2}, opts);
  const ValueGrid back = value_grid_from_json(value_grid_to_json(vg));
  CHECK(back.history == vg.history);
  CHECK(back.spec == vg.spec);
  CHECK(back.time_grid == vg.time_grid);
  CHECK(back.steps_run == vg.steps_run);
  const ValueGrid lean = value_grid_from_json(value_grid_to_json(vg, false));
  CHECK(lean.history.size() == 1);
  CHECK(lean.values() == vg.values());

  const auto dir = testutil::scratch_dir("oracle_io");
  save_value_grid(vg, dir / "v.json");
  CHECK(load_value_grid(dir / "v.json").values() == vg.values());
  save_value_grid(vg, dir / "v.csv");
  const std::string csv = read_text_file(dir / "v.csv");
  CHECK(csv.rfind("# ", 0) == 0);
  CHECK(csv.find("\nx0,x1,value\n") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3 + 121);
  CHECK_THROWS_AS(load_value_grid(dir / "nope.json"), IoError);

  nlohmann::json bad = value_grid_to_json(vg);
  bad["values"].erase(0);
  CHECK_THROWS_AS(value_grid_from_json(bad), ConfigError);
  CHECK_THROWS_AS(value_grid_from_json(nlohmann::json{{"format", "x"}}), ConfigError);
}

}
