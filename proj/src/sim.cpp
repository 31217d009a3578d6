#include "reachcls/sim.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "reachcls/parallel.hpp"
#include "reachcls/policy.hpp"

namespace reachcls {

void TimeGrid::validate() const {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("time grid: dt must be > 0");
  if (num_steps < 0) throw InvalidArgument("time grid: num_steps must be >= 0");
  if (substeps < 1) throw InvalidArgument("time grid: substeps must be >= 1");
}

StepWorkspace::StepWorkspace(const ControlAffineModel& model)
    : rhs(model),
      k1(model.state_dim()),
      k2(model.state_dim()),
      k3(model.state_dim()),
      k4(model.state_dim()),
      tmp(model.state_dim()),
      cur(model.state_dim()) {}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = a - two_pi * std::floor((a + std::numbers::pi) / two_pi);
  if (w >= std::numbers::pi) w -= two_pi;
  return w;
}

void integrate_step_into(const ControlAffineModel& model, std::span<const double> s,
                         std::span<const double> u, std::span<const double> d, double dt,
                         int substeps, std::span<double> out, StepWorkspace& ws) {
  const std::size_t n = model.state_dim();
  const double h = dt / substeps;
  std::copy(s.begin(), s.end(), ws.cur.begin());
  for (int sub = 0; sub < substeps; ++sub) {
    eval_rhs_into(model, ws.cur, u, d, ws.k1, ws.rhs);
    for (std::size_t i = 0; i < n; ++i) ws.tmp[i] = ws.cur[i] + 0.5 * h * ws.k1[i];
    eval_rhs_into(model, ws.tmp, u, d, ws.k2, ws.rhs);
    for (std::size_t i = 0; i < n; ++i) ws.tmp[i] = ws.cur[i] + 0.5 * h * ws.k2[i];
    eval_rhs_into(model, ws.tmp, u, d, ws.k3, ws.rhs);
    for (std::size_t i = 0; i < n; ++i) ws.tmp[i] = ws.cur[i] + h * ws.k3[i];
    eval_rhs_into(model, ws.tmp, u, d, ws.k4, ws.rhs);
    for (std::size_t i = 0; i < n; ++i) {
      ws.cur[i] += h / 6.0 * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
    }
  }
  for (auto i : model.angle_dims()) ws.cur[i] = wrap_angle(ws.cur[i]);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(ws.cur[i])) {
      throw NumericalBlowup("integration produced a non-finite state " + format_vec(ws.cur) +
                                " from " + format_vec(s),
                            ws.cur);
    }
    out[i] = ws.cur[i];
  }
}

StateVec integrate_step(const ControlAffineModel& model, std::span<const double> s,
                        std::span<const double> u, std::span<const double> d, double dt,
                        int substeps) {
  check_inputs(model, s, u, d);
  if (!(dt > 0.0)) throw InvalidArgument("integrate_step: dt must be > 0");
  if (substeps < 1) throw InvalidArgument("integrate_step: substeps must be >= 1");
  StepWorkspace ws(model);
  StateVec out(model.state_dim());
  integrate_step_into(model, s, u, d, dt, substeps, out, ws);
  return out;
}

namespace {

void check_rollout_args(const ControlAffineModel& model, const PolicyStack& stack,
                        std::span<const double> s, int k_start) {
  if (s.size() != model.state_dim()) throw InvalidArgument("rollout: state dimension mismatch");
  if (stack.state_dim() != model.state_dim() || stack.control_dim() != model.control_dim() ||
      stack.disturbance_dim() != model.disturbance_dim()) {
    throw InvalidArgument("rollout: policy stack does not match model " + std::string(model.name()));
  }
  if (k_start < 0) throw InvalidArgument("rollout: k_start must be >= 0");
  if (k_start > 0) stack.layer_index(k_start - 1);  // throws when not covered
}

}  // namespace

double rollout_cost(const ControlAffineModel& model, const PolicyStack& stack,
                    std::span<const double> s, int k_start, const CostSpec& cost,
                    StepWorkspace& ws, const DisturbanceSignal* disturbance) {
  const std::size_t n = model.state_dim();
  std::array<double, 64> u_buf{}, d_buf{};
  std::span<double> u(u_buf.data(), model.control_dim());
  std::span<double> d(d_buf.data(), model.disturbance_dim());
  Vec cur(s.begin(), s.end());
  Vec next(n);
  CostAccumulator acc(cost.mode);
  acc.push(cost, cur);
  const TimeGrid& grid = stack.time_grid();
  for (int j = k_start - 1; j >= 0; --j) {
    // Once the running constraint maximum reaches the current value no later
    // sample can lower a reach-avoid cost.
    if (cost.mode == CostMode::ReachAvoid && acc.running_g() >= acc.value()) break;
    stack.eval_control_into(j, cur, u);
    if (disturbance) {
      (*disturbance)(cur, j, d);
    } else {
      stack.eval_disturbance_into(j, cur, d);
    }
    integrate_step_into(model, cur, u, d, grid.dt, grid.substeps, next, ws);
    std::swap(cur, next);
    acc.push(cost, cur);
  }
  return acc.value();
}

double rollout_cost(const ControlAffineModel& model, const PolicyStack& stack,
                    std::span<const double> s, int k_start, const CostSpec& cost) {
  check_rollout_args(model, stack, s, k_start);
  StepWorkspace ws(model);
  return rollout_cost(model, stack, s, k_start, cost, ws);
}

Trajectory rollout_trajectory(const ControlAffineModel& model, const PolicyStack& stack,
                              std::span<const double> s, int k_start,
                              const DisturbanceSignal* disturbance) {
  check_rollout_args(model, stack, s, k_start);
  StepWorkspace ws(model);
  const TimeGrid& grid = stack.time_grid();
  Trajectory traj;
  traj.states.emplace_back(s.begin(), s.end());
  traj.times.push_back(grid.time_at(k_start));
  for (int j = k_start - 1; j >= 0; --j) {
    const StateVec& cur = traj.states.back();
    ControlVec u(model.control_dim());
    DisturbVec d(model.disturbance_dim());
    stack.eval_control_into(j, cur, u);
    if (disturbance) {
      (*disturbance)(cur, j, d);
    } else {
      stack.eval_disturbance_into(j, cur, d);
    }
    StateVec next(model.state_dim());
    integrate_step_into(model, cur, u, d, grid.dt, grid.substeps, next, ws);
    traj.controls.push_back(std::move(u));
    traj.disturbances.push_back(std::move(d));
    traj.states.push_back(std::move(next));
    traj.times.push_back(grid.time_at(j));
  }
  return traj;
}

Vec rollout_costs(const ControlAffineModel& model, const PolicyStack& stack,
                  std::span<const double> states, int k_start, const CostSpec& cost,
                  int threads) {
  const std::size_t n = model.state_dim();
  if (states.size() % n != 0) throw InvalidArgument("rollout_costs: ragged state array");
  const std::size_t count = states.size() / n;
  if (count > 0) check_rollout_args(model, stack, states.subspan(0, n), k_start);
  Vec out(count);
  parallel_for(count, threads, [&](std::size_t begin, std::size_t end) {
    StepWorkspace ws(model);
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = rollout_cost(model, stack, states.subspan(i * n, n), k_start, cost, ws);
    }
  });
  return out;
}

}  // namespace reachcls
