#include "reachcls/bench.hpp"

#include <cmath>
#include <numbers>

#include "reachcls/core.hpp"
#include "reachcls/oracle.hpp"

namespace reachcls {

namespace {

using nlohmann::json;

json box(Vec center, Vec half, std::vector<int> projection) {
  return {{"type", "box"}, {"center", center}, {"half_widths", half}, {"projection", projection}};
}

json obstacle(Vec lo, Vec hi, std::vector<int> projection) {
  return {{"type", "bounds_complement"}, {"lo", lo}, {"hi", hi}, {"projection", projection}};
}

/// Target box of side 2 at the origin; stay within max{|x|,|y|} <= 3 and out
/// of two rectangular obstacles.
json planar_reach_avoid() {
  const std::vector<int> xy{0, 1};
  json constraint = {{"type", "intersection"},
                     {"members",
                      {box({0.0, 0.0}, {3.0, 3.0}, xy), obstacle({-2.0, 0.5}, {-1.5, 2.5}, xy),
                       obstacle({0.5, -2.0}, {2.5, -1.5}, xy)}}};
  return {{"mode", "reach_avoid"}, {"target", box({0.0, 0.0}, {1.0, 1.0}, xy)}, {"constraint", constraint}};
}

json learner(int samples, const std::string& disturbance_mode) {
  return {{"samples_per_step", samples},
          {"train",
           {{"learning_rate", 0.001},
            {"decay", 0.95},
            {"grad_steps", 2000},
            {"batch_size", 512},
            {"holdout_fraction", 0.1}}},
          {"disturbance", {{"mode", disturbance_mode}}},
          {"convergence", {{"tolerance", 0.01}, {"window", 3}, {"probe_count", 2000}, {"stop", false}}}};
}

json grid(Vec lo, Vec hi, std::vector<int> points, std::vector<bool> periodic = {}) {
  json g = {{"lo", lo}, {"hi", hi}, {"points", points}};
  if (!periodic.empty()) g["periodic"] = periodic;
  return g;
}

}  // namespace

json bench_point2d(const std::string& bounds_variant) {
  double u = 0.0;
  if (bounds_variant == "half") {
    u = 0.5;
  } else if (bounds_variant == "full") {
    u = 1.0;
  } else {
    throw InvalidArgument("bench_point2d: variant must be 'half' or 'full'");
  }
  const json g = grid({-3.0, -3.0}, {3.0, 3.0}, {61, 61});
  return {{"name", "point2d_" + bounds_variant},
          {"seed", 1},
          {"model", {{"name", "point2d"}, {"params", {{"u_lo", {-u, -u}}, {"u_hi", {u, u}}}}}},
          {"cost", planar_reach_avoid()},
          {"time_grid", {{"dt", 0.1}, {"num_steps", 60}, {"substeps", 1}}},
          {"learner", learner(1000, "none")},
          {"oracle", {{"grid", g}, {"early_stop_tolerance", 1e-6}}},
          {"eval", {{"grid", g}, {"epsilon", 0.05}, {"decisions", true}}},
          {"output_dir", "out/point2d_" + bounds_variant}};
}

json bench_unicycle4d(const std::string& scale) {
  int samples = 0;
  int pts = 0;
  if (scale == "smoke") {
    samples = 20000;
    pts = 21;
  } else if (scale == "full") {
    samples = 200000;
    pts = 41;
  } else {
    throw InvalidArgument("bench_unicycle4d: scale must be 'smoke' or 'full'");
  }
  constexpr double pi = std::numbers::pi;
  const Vec lo{-3.0, -3.0, -pi, 0.0};
  const Vec hi{3.0, 3.0, pi, 2.0};
  const json g = grid(lo, hi, {pts, pts, pts, pts}, {false, false, true, false});
  const double epsilon = GridSpec(lo, hi, {pts, pts, pts, pts}, {0, 0, 1, 0}).cell_diameter();
  return {{"name", "unicycle4d_" + scale},
          {"seed", 1},
          {"model", {{"name", "unicycle4d"}}},
          {"cost", planar_reach_avoid()},
          {"time_grid", {{"dt", 0.1}, {"num_steps", 40}, {"substeps", 1}}},
          {"learner", learner(samples, "none")},
          {"oracle", {{"grid", g}, {"early_stop_tolerance", 1e-6}}},
          {"eval", {{"grid", g}, {"epsilon", epsilon}, {"decisions", false}}},
          {"output_dir", "out/unicycle4d_" + scale}};
}

json bench_fastrack_x(const std::string& disturbance) {
  std::string mode;
  if (disturbance == "analytic") {
    mode = "analytic";
  } else if (disturbance == "learned") {
    mode = "learn";
  } else {
    throw InvalidArgument("bench_fastrack_x: disturbance must be 'analytic' or 'learned'");
  }
  json l = learner(1000, mode);
  if (mode == "analytic") l["disturbance"]["rule"] = "grid_value";
  return {{"name", "fastrack_x_" + disturbance},
          {"seed", 1},
          {"model",
           {{"name", "quad_rel_x"},
            {"params",
             {{"angle_bound", 0.1},
              {"disturbance_bound", 0.25},
              {"planner_bound", 0.25},
              {"position_box", 1.0},
              {"velocity_box", 1.0}}}}},
          {"cost",
           {{"mode", "max_tracking"},
            {"target", {{"type", "sphere"}, {"center", {0.0}}, {"radius", 0.0}, {"projection", {0}}}}}},
          {"time_grid", {{"dt", 0.1}, {"num_steps", 40}, {"substeps", 1}}},
          {"learner", l},
          {"oracle", {{"grid", grid({-3.0, -2.0}, {3.0, 2.0}, {121, 81})}, {"early_stop_tolerance", 1e-6}}},
          {"eval", {{"grid", grid({-1.0, -1.0}, {1.0, 1.0}, {41, 41})}, {"epsilon", 0.05}, {"decisions", true}}},
          {"output_dir", "out/fastrack_x_" + disturbance}};
}

json bench_quad7d() {
  return {{"name", "quad7d"},
          {"seed", 1},
          {"model",
           {{"name", "quad7d_rel"},
            {"params",
             {{"angle_bound", 0.1},
              {"thrust_bound", 2.0},
              {"yaw_rate_bound", 1.0},
              {"disturbance_bound", 0.25},
              {"planner_bound", 0.25},
              {"position_box", 2.0},
              {"velocity_box", 2.0}}}}},
          {"cost",
           {{"mode", "max_tracking"},
            {"target",
             {{"type", "sphere"}, {"center", {0.0, 0.0, 0.0}}, {"radius", 0.0}, {"projection", {0, 1, 2}}}}}},
          {"time_grid", {{"dt", 0.1}, {"num_steps", 10}, {"substeps", 1}}},
          {"learner", learner(200000, "learn")},
          {"eval",
           {{"grid",
             grid({-2.0, 0.0, 0.0, -2.0, 0.0, 0.0, 0.0}, {2.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0},
                  {41, 1, 1, 41, 1, 1, 1})},
            {"epsilon", 0.05},
            {"decisions", true}}},
          {"output_dir", "out/quad7d"}};
}

std::vector<std::string> bench_names() {
  return {"point2d_half",        "point2d_full",       "unicycle4d_smoke", "unicycle4d_full",
          "fastrack_x_analytic", "fastrack_x_learned", "quad7d"};
}

json bench_by_name(const std::string& name) {
  if (name == "point2d_half") return bench_point2d("half");
  if (name == "point2d_full") return bench_point2d("full");
  if (name == "unicycle4d_smoke") return bench_unicycle4d("smoke");
  if (name == "unicycle4d_full") return bench_unicycle4d("full");
  if (name == "fastrack_x_analytic") return bench_fastrack_x("analytic");
  if (name == "fastrack_x_learned") return bench_fastrack_x("learned");
  if (name == "quad7d") return bench_quad7d();
  throw InvalidArgument("unknown bench '" + name + "'");
}

}  // namespace reachcls
