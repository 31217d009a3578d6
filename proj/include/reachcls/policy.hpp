#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "reachcls/core.hpp"
#include "reachcls/nn.hpp"
#include "reachcls/sim.hpp"

namespace reachcls {

enum class DisturbanceSource { None, Learned, Analytic };

std::string to_string(DisturbanceSource s);

/// Closed-form disturbance d*(s, k) writing N_d values into `out`.
struct AnalyticDisturbance {
  std::string name;
  std::function<void(std::span<const double> s, int k, std::span<double> out)> rule;
};

/// Time-indexed bang-bang policies. Layer k holds N_u control classifiers
/// (and N_d disturbance classifiers when learned) driving the step from time
/// -(k+1) dt to -k dt. Once converged, the deepest layer stands in for every
/// k beyond the stored depth.
class PolicyStack;
PolicyStack policy_from_json(const nlohmann::json& j);

class PolicyStack {
 public:
  PolicyStack() = default;
  PolicyStack(std::string model_name, TimeGrid time_grid, std::size_t state_dim,
              IntervalBounds u_bounds, IntervalBounds d_bounds, InputNormalizer normalizer,
              DisturbanceSource source);

  static PolicyStack for_model(const ControlAffineModel& model, TimeGrid time_grid,
                               DisturbanceSource source);

  const std::string& model_name() const { return model_name_; }
  const TimeGrid& time_grid() const { return time_grid_; }
  std::size_t state_dim() const { return state_dim_; }
  std::size_t control_dim() const { return u_bounds_.size(); }
  std::size_t disturbance_dim() const { return d_bounds_.size(); }
  const IntervalBounds& u_bounds() const { return u_bounds_; }
  const IntervalBounds& d_bounds() const { return d_bounds_; }
  const InputNormalizer& normalizer() const { return normalizer_; }

  /// Number of stored layers.
  std::size_t depth() const { return control_layers_.size(); }
  /// Steps a full-horizon rollout takes (time_grid.num_steps).
  int horizon_steps() const { return time_grid_.num_steps; }

  bool converged() const { return converged_; }
  int converged_step() const { return converged_step_; }
  void mark_converged(int step);

  DisturbanceSource disturbance_source() const { return source_; }
  const std::string& analytic_rule_name() const { return rule_name_; }
  bool has_analytic_rule() const { return static_cast<bool>(rule_.rule); }
  /// Attaches the closed-form disturbance; required before evaluation when the
  /// source is Analytic (rules are not serialized, only their names).
  void set_analytic_disturbance(AnalyticDisturbance rule);

  /// Appends layer `depth()`. Sizes must match N_u and (for learned
  /// disturbances) N_d.
  void push_layer(std::vector<MlpClassifier> control, std::vector<MlpClassifier> disturbance);

  /// Layer used at step k (deepest layer reused for k >= depth when converged).
  std::size_t layer_index(int k) const;
  const std::vector<MlpClassifier>& control_layer(int k) const;
  const std::vector<MlpClassifier>& disturbance_layer(int k) const;
  const std::vector<std::vector<MlpClassifier>>& control_layers() const { return control_layers_; }
  const std::vector<std::vector<MlpClassifier>>& disturbance_layers() const {
    return disturbance_layers_;
  }

  void control_bits_into(int k, std::span<const double> s, std::span<std::uint8_t> out) const;
  void eval_control_into(int k, std::span<const double> s, std::span<double> out) const;
  void eval_disturbance_into(int k, std::span<const double> s, std::span<double> out) const;
  ControlVec eval_control(int k, std::span<const double> s) const;
  DisturbVec eval_disturbance(int k, std::span<const double> s) const;

  /// Keeps only the deepest layer, which then serves every k; requires convergence.
  void truncate_to_converged();
  bool truncated() const { return truncated_; }

  std::size_t classifier_count() const;
  std::size_t parameter_count() const;

 private:
  friend PolicyStack policy_from_json(const nlohmann::json& j);
  void check_state(std::span<const double> s) const;

  std::string model_name_;
  TimeGrid time_grid_;
  std::size_t state_dim_ = 0;
  IntervalBounds u_bounds_;
  IntervalBounds d_bounds_;
  InputNormalizer normalizer_;
  DisturbanceSource source_ = DisturbanceSource::None;
  std::string rule_name_;
  AnalyticDisturbance rule_;
  bool converged_ = false;
  int converged_step_ = -1;
  bool truncated_ = false;
  std::vector<std::vector<MlpClassifier>> control_layers_;
  std::vector<std::vector<MlpClassifier>> disturbance_layers_;
};

enum class ParamEncoding {
  /// Base64 of little-endian float32 when every parameter is float32-exact,
  /// float64 otherwise.
  Compact,
  /// Decimal strings with 17 significant digits.
  Decimal,
};

inline constexpr int kPolicyFormatVersion = 1;

nlohmann::json policy_to_json(const PolicyStack& stack, ParamEncoding enc = ParamEncoding::Compact);
PolicyStack policy_from_json(const nlohmann::json& j);
std::string policy_to_string(const PolicyStack& stack, ParamEncoding enc = ParamEncoding::Compact);
void save_policy(const PolicyStack& stack, const std::filesystem::path& path,
                 ParamEncoding enc = ParamEncoding::Compact);
PolicyStack load_policy(const std::filesystem::path& path);

/// Shortest-safe decimal text of a double ("%.17g").
std::string decimal17(double v);
double parse_decimal(const nlohmann::json& j, const std::string& path);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace reachcls
