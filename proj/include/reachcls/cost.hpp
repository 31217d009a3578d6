#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "reachcls/core.hpp"

namespace reachcls {

/// Signed-distance style implicit surface: negative inside the set it encodes,
/// positive outside, zero on the boundary. `projection` lists the state indices
/// the surface reads; when empty, the leading state components are used.
class ImplicitSurface {
 public:
  enum class Kind { Box, Sphere, BoundsComplement, HalfSpace, Union, Intersection };

  static ImplicitSurface box(Vec center, Vec half_widths, std::vector<std::size_t> projection = {});
  static ImplicitSurface sphere(Vec center, double radius, std::vector<std::size_t> projection = {});
  /// Zero-sublevel set is the complement of the box [lo, hi] (used for obstacles).
  static ImplicitSurface bounds_complement(Vec lo, Vec hi, std::vector<std::size_t> projection = {});
  /// {x : normal . x <= offset}, scaled to a true signed distance.
  static ImplicitSurface half_space(Vec normal, double offset, std::vector<std::size_t> projection = {});
  /// Union of sets: pointwise min.
  static ImplicitSurface union_of(std::vector<ImplicitSurface> members);
  /// Intersection of sets: pointwise max.
  static ImplicitSurface intersection_of(std::vector<ImplicitSurface> members);

  double eval(std::span<const double> s) const;

  Kind kind() const { return kind_; }
  const std::vector<ImplicitSurface>& members() const { return members_; }
  /// Largest state index read plus one.
  std::size_t required_dim() const;

  nlohmann::json to_json() const;
  /// Throws ConfigError naming `path` on malformed input.
  static ImplicitSurface from_json(const nlohmann::json& j, const std::string& path = "surface");

 private:
  double read(std::span<const double> s, std::size_t i) const;

  Kind kind_ = Kind::Box;
  Vec a_;  // center / lo / normal
  Vec b_;  // half widths / hi
  double scalar_ = 0.0;  // radius / offset
  std::vector<std::size_t> projection_;
  std::vector<ImplicitSurface> members_;
};

enum class CostMode { ReachAvoid, MaxTracking };

std::string to_string(CostMode mode);
CostMode cost_mode_from_string(const std::string& s);

/// Target surface l, optional constraint g, and the aggregation over a
/// trajectory.
struct CostSpec {
  ImplicitSurface target;
  std::optional<ImplicitSurface> constraint;
  CostMode mode = CostMode::ReachAvoid;

  CostSpec(ImplicitSurface target_, std::optional<ImplicitSurface> constraint_ = std::nullopt,
           CostMode mode_ = CostMode::ReachAvoid);

  double l(std::span<const double> s) const { return target.eval(s); }
  /// -inf when there is no constraint.
  double g(std::span<const double> s) const {
    return constraint ? constraint->eval(s) : -std::numeric_limits<double>::infinity();
  }

  nlohmann::json to_json() const;
  static CostSpec from_json(const nlohmann::json& j, const std::string& path = "cost");
};

/// Running evaluation of the cost functional over trajectory samples pushed
/// in time order.
///
/// ReachAvoid: min over samples tau of max{ l(s_tau), max_{q <= tau} g(s_q) }.
/// MaxTracking: max over samples of l(s_tau).
class CostAccumulator {
 public:
  explicit CostAccumulator(CostMode mode) : mode_(mode) {}

  void push(double l, double g) {
    if (mode_ == CostMode::ReachAvoid) {
      if (g > running_g_) running_g_ = g;
      const double term = l > running_g_ ? l : running_g_;
      if (term < value_) value_ = term;
    } else {
      if (l > value_) value_ = l;
    }
    any_ = true;
  }
  void push(const CostSpec& cost, std::span<const double> s) { push(cost.l(s), cost.g(s)); }

  bool empty() const { return !any_; }
  double value() const { return value_; }
  double running_g() const { return running_g_; }

 private:
  CostMode mode_;
  bool any_ = false;
  double running_g_ = -std::numeric_limits<double>::infinity();
  double value_ = mode_ == CostMode::ReachAvoid ? std::numeric_limits<double>::infinity()
                                                : -std::numeric_limits<double>::infinity();
};

struct Trajectory;

double reach_avoid_cost(const Trajectory& traj, const ImplicitSurface& target,
                        const std::optional<ImplicitSurface>& constraint);
double max_tracking_cost(const Trajectory& traj, const ImplicitSurface& target);
/// Dispatches on cost.mode.
double trajectory_cost(const Trajectory& traj, const CostSpec& cost);

}  // namespace reachcls
