#pragma once

#include <functional>
#include <span>
#include <vector>

#include "reachcls/core.hpp"
#include "reachcls/cost.hpp"
#include "reachcls/dynamics.hpp"

namespace reachcls {

class PolicyStack;

/// Backward time grid: t_k = -k * dt for k = 0..num_steps, horizon T = num_steps * dt.
/// Each step of length dt is integrated with `substeps` RK4 sub-intervals.
struct TimeGrid {
  double dt = 0.1;
  int num_steps = 1;
  int substeps = 1;

  double horizon() const { return dt * num_steps; }
  double time_at(int k) const { return -static_cast<double>(k) * dt; }
  void validate() const;
  bool operator==(const TimeGrid&) const = default;
};

struct Trajectory {
  std::vector<StateVec> states;
  std::vector<double> times;
  /// Inputs held over [times[i], times[i+1]); one fewer than states.
  std::vector<ControlVec> controls;
  std::vector<DisturbVec> disturbances;
};

/// Scratch for integrate_step_into; one per thread.
struct StepWorkspace {
  RhsWorkspace rhs;
  Vec k1, k2, k3, k4, tmp, cur;
  explicit StepWorkspace(const ControlAffineModel& model);
};

/// Classical RK4 over `substeps` equal sub-intervals with inputs held constant;
/// angle dimensions are wrapped into [-pi, pi) afterwards. Throws
/// NumericalBlowup when the result is not finite.
StateVec integrate_step(const ControlAffineModel& model, std::span<const double> s,
                        std::span<const double> u, std::span<const double> d, double dt,
                        int substeps = 1);

/// Unchecked hot-path variant; `out` may not alias `s`.
void integrate_step_into(const ControlAffineModel& model, std::span<const double> s,
                         std::span<const double> u, std::span<const double> d, double dt,
                         int substeps, std::span<double> out, StepWorkspace& ws);

double wrap_angle(double a);

/// Overrides the stack's disturbance during a rollout: (state, step k, out).
using DisturbanceSignal = std::function<void(std::span<const double>, int, std::span<double>)>;

/// Simulates from time -k_start * dt to 0 applying the stack's bang-bang
/// inputs (layer j drives the step from -(j+1) dt to -j dt) and returns the
/// cost functional over the k_start + 1 grid states, initial state included.
double rollout_cost(const ControlAffineModel& model, const PolicyStack& stack,
                    std::span<const double> s, int k_start, const CostSpec& cost);

/// Same, but with a caller-owned workspace and an optional disturbance override.
double rollout_cost(const ControlAffineModel& model, const PolicyStack& stack,
                    std::span<const double> s, int k_start, const CostSpec& cost,
                    StepWorkspace& ws, const DisturbanceSignal* disturbance = nullptr);

Trajectory rollout_trajectory(const ControlAffineModel& model, const PolicyStack& stack,
                              std::span<const double> s, int k_start,
                              const DisturbanceSignal* disturbance = nullptr);

/// rollout_cost for many states (row-major, state_dim per row) in parallel.
Vec rollout_costs(const ControlAffineModel& model, const PolicyStack& stack,
                  std::span<const double> states, int k_start, const CostSpec& cost,
                  int threads = 1);

}  // namespace reachcls
