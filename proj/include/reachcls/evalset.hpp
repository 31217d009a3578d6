#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "reachcls/cost.hpp"
#include "reachcls/dynamics.hpp"
#include "reachcls/oracle.hpp"
#include "reachcls/policy.hpp"
#include "reachcls/sim.hpp"

namespace reachcls {

/// Induced value V^{Pi}(s): the rollout cost from the start of the stack's
/// horizon (k = horizon_steps), or from `k_start` when given.
double estimate_value(const ControlAffineModel& model, const PolicyStack& stack,
                      std::span<const double> s, const CostSpec& cost);
double estimate_value(const ControlAffineModel& model, const PolicyStack& stack,
                      std::span<const double> s, const CostSpec& cost, int k_start);

struct NodeFailure {
  std::size_t node = 0;
  std::string message;
  bool operator==(const NodeFailure&) const = default;
};

struct SetSummary {
  std::size_t nodes = 0;
  std::size_t evaluated = 0;
  std::size_t members = 0;
  std::size_t violations = 0;
  double member_fraction = 0.0;
  /// ReachAvoid: violations / members. MaxTracking: violations / evaluated nodes.
  double violation_fraction = 0.0;
  bool operator==(const SetSummary&) const = default;
};

struct SetReport {
  std::string model_name;
  GridSpec spec;
  CostMode mode = CostMode::ReachAvoid;
  int k_start = 0;
  /// Induced value per node (lexicographic order); NaN where evaluation failed.
  Vec values;
  Bits member;
  /// Bang-bang control chosen at each node by the first layer of the rollout
  /// (layer k_start - 1), row-major node x N_u. Empty when not requested or k_start == 0.
  std::size_t decision_dim = 0;
  Vec decisions;
  std::vector<NodeFailure> failures;
  /// Present after compare_sets.
  std::optional<Vec> oracle_values;
  Bits violation;
  double epsilon = 0.0;
  SetSummary summary;

  bool compared() const { return oracle_values.has_value(); }
};

struct ExtractOptions {
  int threads = 0;
  /// Rollout start step; negative means the stack's full horizon.
  int k_start = -1;
  bool decisions = false;
};

/// Evaluates estimate_value at every node of `spec`; membership is value <= 0.
/// Numerical failures at a node are recorded and the node left a non-member.
SetReport extract_set(const ControlAffineModel& model, const PolicyStack& stack, const GridSpec& spec,
                      const CostSpec& cost, const ExtractOptions& opts = {});

/// Adds oracle values and violation flags. ReachAvoid: a member whose oracle
/// value exceeds epsilon. MaxTracking: a node whose induced value is below the
/// oracle value minus epsilon.
SetReport compare_sets(SetReport report, const ValueGrid& oracle, double epsilon);

/// Recomputes member/violation counts and fractions from the flags.
SetSummary summarize(const SetReport& report);

/// Columns x0..x{n-1},value,member[,oracle_value,violation][,u0..]; rows in node order.
std::string report_csv(const SetReport& report);
nlohmann::json report_to_json(const SetReport& report);
SetReport report_from_json(const nlohmann::json& j);
void save_report(const SetReport& report, const std::filesystem::path& path);
SetReport load_report(const std::filesystem::path& path);

/// Columns t,x0..,u0..,d0..,l,g; the final row leaves the input columns empty.
std::string trajectory_csv(const Trajectory& traj, const CostSpec& cost, std::size_t control_dim,
                           std::size_t disturbance_dim);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace reachcls
