#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "reachcls/cost.hpp"
#include "reachcls/dynamics.hpp"
#include "reachcls/policy.hpp"
#include "reachcls/sim.hpp"

namespace reachcls {

/// Rectangular grid. Non-periodic dims place `points` nodes evenly on
/// [lo, hi] inclusive (a single point sits at lo, which must equal hi).
/// Periodic dims place nodes at lo + i (hi - lo) / points, i < points, and
/// wrap. Nodes are ordered lexicographically with dimension 0 most
/// significant.
struct GridSpec {
  Vec lo;
  Vec hi;
  std::vector<int> points;
  std::vector<std::uint8_t> periodic;  // empty means none

  GridSpec() = default;
  GridSpec(Vec lo_, Vec hi_, std::vector<int> points_, std::vector<std::uint8_t> periodic_ = {});

  std::size_t dim() const { return lo.size(); }
  std::size_t node_count() const;
  bool is_periodic(std::size_t i) const { return !periodic.empty() && periodic[i] != 0; }
  double spacing(std::size_t i) const;
  double coord(std::size_t i, int idx) const;
  /// Coordinates of node `index` written into `out`.
  void node(std::size_t index, std::span<double> out) const;
  Vec node(std::size_t index) const;
  /// Euclidean length of one cell's diagonal over the non-singleton dims.
  double cell_diameter() const;

  /// Shape checks shared by every grid: sizes agree, lo <= hi, points >= 1,
  /// singleton dims have lo == hi.
  void validate() const;
  /// Oracle grids additionally need odd points >= 3 and lo < hi everywhere.
  void validate_oracle() const;

  bool operator==(const GridSpec&) const = default;

  nlohmann::json to_json() const;
  static GridSpec from_json(const nlohmann::json& j, const std::string& path = "grid");
};

/// Multilinear interpolation of `values` (one per node of `spec`) at `s`.
/// Coordinates outside a non-periodic range are clamped; `clamped`, when
/// given, is set to whether that happened.
double interp(const GridSpec& spec, std::span<const double> values, std::span<const double> s,
              bool* clamped = nullptr);

/// Dense value samples from the DP oracle.
struct ValueGrid {
  GridSpec spec;
  CostMode mode = CostMode::ReachAvoid;
  TimeGrid time_grid;
  std::string model_name;
  /// Sweeps actually run; smaller than time_grid.num_steps after early stop.
  int steps_run = 0;
  bool converged = false;
  /// history[k] = V_k for k = 0..steps_run when every step was retained;
  /// otherwise only the final array is kept (history.size() == 1).
  std::vector<Vec> history;

  const Vec& values() const { return history.back(); }
  bool retains_all() const { return history.size() == static_cast<std::size_t>(steps_run) + 1; }
  /// V_k; past an early stop the converged array stands in. Throws when the
  /// step was not retained.
  const Vec& values_at(int k) const;

  double interp(std::span<const double> s, bool* clamped = nullptr) const {
    return reachcls::interp(spec, values(), s, clamped);
  }
  double interp_at(int k, std::span<const double> s, bool* clamped = nullptr) const {
    return reachcls::interp(spec, values_at(k), s, clamped);
  }
};

struct OracleOptions {
  int threads = 0;
  bool retain_all = false;
  /// Sweeps stop once the largest node change falls below this (0 disables).
  double early_stop_tolerance = 1e-6;
};

inline constexpr std::size_t kOracleMaxDim = 4;

/// Backward value iteration on `spec`:
///   ReachAvoid:  V_0 = max{g, l},  V_{k+1} = max{g, min{l, min_u max_d V_k(step(s, u, d))}}
///   MaxTracking: V_0 = l,          V_{k+1} = max{l, min_u max_d V_k(step(s, u, d))}
/// with corner inputs only and multilinear interpolation of V_k.
ValueGrid grid_solve(const ControlAffineModel& model, const CostSpec& cost, const GridSpec& spec,
                     const TimeGrid& time_grid, const OracleOptions& opts = {});

/// Worst-case disturbance read off a solved grid: at (s, k) the corner d
/// maximizing min_u V_k(step(s, u, d)); the lowest-numbered corner wins ties.
AnalyticDisturbance grid_disturbance_rule(std::shared_ptr<const ValueGrid> vg, ModelPtr model);

nlohmann::json value_grid_to_json(const ValueGrid& vg, bool include_history = true);
ValueGrid value_grid_from_json(const nlohmann::json& j);
/// Node coordinates and final values, preceded by `#` metadata lines.
std::string value_grid_csv(const ValueGrid& vg);
void save_value_grid(const ValueGrid& vg, const std::filesystem::path& path,
                     bool include_history = true);
ValueGrid load_value_grid(const std::filesystem::path& path);

}  // namespace reachcls
