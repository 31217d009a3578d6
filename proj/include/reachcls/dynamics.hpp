#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reachcls/core.hpp"

namespace reachcls {

/// A control/disturbance-affine system
///
///   ds/dt = drift(s) + B(s) u + G(s) d,
///
/// where B(s) is n x N_u (one column per control input) and G(s) is n x N_d.
/// Inputs are boxed by u_bounds and d_bounds; state_box is the region states
/// are sampled from during learning. Instances are immutable once built.
class ControlAffineModel {
 public:
  virtual ~ControlAffineModel() = default;

  virtual std::string_view name() const = 0;

  std::size_t state_dim() const { return state_box_.size(); }
  std::size_t control_dim() const { return u_bounds_.size(); }
  std::size_t disturbance_dim() const { return d_bounds_.size(); }

  const IntervalBounds& u_bounds() const { return u_bounds_; }
  const IntervalBounds& d_bounds() const { return d_bounds_; }
  const IntervalBounds& state_box() const { return state_box_; }

  /// State indices holding angles; integration wraps them into [-pi, pi).
  const std::vector<std::size_t>& angle_dims() const { return angle_dims_; }

  virtual void drift(std::span<const double> s, std::span<double> out) const = 0;
  /// Fills `out` (state_dim x control_dim, pre-sized) with the control columns.
  virtual void control_columns(std::span<const double> s, Matrix& out) const = 0;
  virtual void disturbance_columns(std::span<const double> s, Matrix& out) const = 0;

  Matrix control_matrix(std::span<const double> s) const;
  Matrix disturbance_matrix(std::span<const double> s) const;

 protected:
  ControlAffineModel(IntervalBounds u_bounds, IntervalBounds d_bounds, IntervalBounds state_box,
                     std::vector<std::size_t> angle_dims = {});

 private:
  IntervalBounds u_bounds_;
  IntervalBounds d_bounds_;
  IntervalBounds state_box_;
  std::vector<std::size_t> angle_dims_;
};

using ModelPtr = std::shared_ptr<const ControlAffineModel>;

/// Scratch buffers for repeated right-hand-side evaluations.
struct RhsWorkspace {
  Matrix control_cols;
  Matrix disturbance_cols;
  explicit RhsWorkspace(const ControlAffineModel& model)
      : control_cols(model.state_dim(), model.control_dim()),
        disturbance_cols(model.state_dim(), model.disturbance_dim()) {}
};

/// drift(s) + sum_i B_i(s) u_i + sum_j G_j(s) d_j. Checks dimensions and that
/// u, d lie within the model's bounds.
StateVec eval_rhs(const ControlAffineModel& model, std::span<const double> s,
                  std::span<const double> u, std::span<const double> d);

/// Unchecked variant used on hot paths; `out` must have state_dim entries.
void eval_rhs_into(const ControlAffineModel& model, std::span<const double> s,
                   std::span<const double> u, std::span<const double> d, std::span<double> out,
                   RhsWorkspace& ws);

void check_inputs(const ControlAffineModel& model, std::span<const double> s,
                  std::span<const double> u, std::span<const double> d);

// --- built-in models --------------------------------------------------------

/// dx/dt = u1, dy/dt = u2. Default sampling box [-3, 3]^2.
ModelPtr make_point2d(const IntervalBounds& u_bounds);
ModelPtr make_point2d(const IntervalBounds& u_bounds, const IntervalBounds& state_box);

/// State (x, y, theta, v); controls (u_omega, u_a) with u_omega in [-1, 1] and
/// u_a in [0, 1]. Default sampling box [-3,3]^2 x [-pi,pi] x [0,2].
ModelPtr make_unicycle4d();
ModelPtr make_unicycle4d(const IntervalBounds& u_bounds, const IntervalBounds& state_box);

struct QuadParams {
  double gravity = 9.81;
  double angle_bound = 0.1;        // |theta|, |phi| in rad
  double thrust_bound = 2.0;       // |T - g| in m/s^2
  double yaw_rate_bound = 1.0;     // |psi_dot| in rad/s (7D only)
  double disturbance_bound = 0.25; // |d_v| per axis, m/s
  double planner_bound = 0.25;     // |b| per axis, m/s
  double position_box = 2.0;       // relative position sampling half-width
  double velocity_box = 2.0;       // velocity sampling half-width
};

/// Near-hover quadrotor relative to a 3D kinematic planner.
/// State (r_x, r_y, r_z, s_vx, s_vy, s_vz); controls (theta, phi, T);
/// disturbance (d_vx, d_vy, d_vz, b_x, b_y, b_z). tan is replaced by its
/// first-order surrogate so the model is exactly affine in the controls.
ModelPtr make_quad6d_relative(const QuadParams& params = {});

/// Adds yaw s_psi (state 7) and yaw-rate control (input 4).
ModelPtr make_quad7d_relative(const QuadParams& params = {});

/// The decoupled (r_x, s_vx) subsystem of the 6D relative model: control theta,
/// disturbance (d_vx, b_x).
ModelPtr make_quad_rel_x(const QuadParams& params = {});

/// ds/dt = A s + a + B u + G d with constant matrices. Used for synthetic
/// problems where one RK4 step is exactly affine in the inputs.
ModelPtr make_linear_model(Matrix a_matrix, Vec offset, Matrix b_matrix, Matrix g_matrix,
                           IntervalBounds u_bounds, IntervalBounds d_bounds,
                           IntervalBounds state_box);

/// Rebuilds a model with a different sampling box and/or input bounds; used by
/// config overrides. Empty bounds keep the model's own.
ModelPtr with_overrides(const ModelPtr& model, const IntervalBounds& u_bounds,
                        const IntervalBounds& d_bounds, const IntervalBounds& state_box);

}  // namespace reachcls
