#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "reachcls/bench.hpp"
#include "reachcls/config.hpp"
#include "test_util.hpp"

using namespace reachcls;

TEST_SUITE("bench") {

TEST_CASE("point2d benchmarks") {
  for (const char* v : {"half", "full"}) {
    const ExperimentConfig c = parse_config(bench_point2d(v));
    const double u = std::string(v) == "half" ? 0.5 : 1.0;
    CHECK(c.model->u_bounds().hi == Vec{u, u});
    CHECK(c.learn.samples_per_step == 1000);
    CHECK(c.eval_grid->node_count() == 3721);
    CHECK(c.oracle_grid->node_count() == 3721);
    // Target: box of side 2 at the origin.
    CHECK(c.cost.l(Vec{1.0, 0.0}) == doctest::Approx(0.0));
    CHECK(c.cost.l(Vec{0.0, 0.0}) == doctest::Approx(-1.0));
    // Constraint contains max(|x|, |y|) <= 3.
    CHECK(c.cost.g(Vec{3.5, 0.0}) > 0.0);
    CHECK(c.cost.g(Vec{0.0, -2.9}) < 0.0);
    CHECK(c.epsilon == doctest::Approx(0.05));
    CHECK(c.learn.train.learning_rate == doctest::Approx(0.001));
    CHECK(c.learn.train.decay == doctest::Approx(0.95));
  }
  CHECK_THROWS_AS(bench_point2d("quarter"), InvalidArgument);
}

TEST_CASE("unicycle benchmarks") {
  const ExperimentConfig smoke = parse_config(bench_unicycle4d("smoke"));
  CHECK(smoke.learn.samples_per_step == 20000);
  CHECK(smoke.oracle_grid->node_count() == 194481);
  CHECK(smoke.oracle_grid->is_periodic(2));
  CHECK(smoke.epsilon == doctest::Approx(smoke.eval_grid->cell_diameter()));
  const ExperimentConfig full = parse_config(bench_unicycle4d("full"));
  CHECK(full.learn.samples_per_step == 200000);
  CHECK(full.oracle_grid->points == std::vector<int>{41, 41, 41, 41});
}

TEST_CASE("tracking benchmarks") {
  const ExperimentConfig a = parse_config(bench_fastrack_x("analytic"));
  CHECK(a.cost.mode == CostMode::MaxTracking);
  CHECK(a.learn.disturbance_mode == DisturbanceMode::Analytic);
  CHECK(a.model->state_dim() == 2);
  const ExperimentConfig l = parse_config(bench_fastrack_x("learned"));
  CHECK(l.learn.disturbance_mode == DisturbanceMode::Learn);
  const ExperimentConfig q = parse_config(bench_quad7d());
  CHECK(q.model->state_dim() == 7);
  CHECK(q.learn.samples_per_step == 200000);
  CHECK_FALSE(q.oracle_grid.has_value());
  CHECK(q.cost.l(Vec{3.0, 4.0, 0.0, 9.0, 9.0, 9.0, 1.0}) == doctest::Approx(5.0));
}

TEST_CASE("shipped bench files match the generators") {
  for (const auto& name : bench_names()) {
    CAPTURE(name);
    std::ifstream in(testutil::source_path("bench/" + name + ".json"));
    REQUIRE(in.good());
    CHECK(nlohmann::json::parse(in) == bench_by_name(name));
  }
  CHECK_THROWS_AS(bench_by_name("nope"), InvalidArgument);
}

}
