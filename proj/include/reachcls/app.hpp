#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "reachcls/config.hpp"
#include "reachcls/evalset.hpp"
#include "reachcls/learner.hpp"
#include "reachcls/oracle.hpp"
#include "reachcls/policy.hpp"

namespace reachcls {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitIo = 4;

struct RunOptions {
  /// Overrides the config's output_dir.
  std::optional<std::filesystem::path> out_dir;
  int threads = 0;
  bool resume = false;
  /// Solved value grid: compared against by eval, and backing an analytic disturbance.
  std::optional<std::filesystem::path> oracle_path;
  /// eval: export per-node control decisions (also enabled by the config).
  bool decisions = false;
  /// train: additionally write policy_converged.json holding only the deepest layer.
  bool truncate_converged = false;
};

struct TrainRun {
  LearnerState state;
  std::filesystem::path policy_path;
  std::filesystem::path metrics_path;
  std::filesystem::path manifest_path;
  double wall_seconds = 0.0;
};

struct EvalRun {
  SetReport report;
  std::filesystem::path json_path;
  std::filesystem::path csv_path;
};

/// checkpoint.json contents: learner state tagged with the config hash.
nlohmann::json checkpoint_to_json(const LearnerState& s, std::uint64_t config_hash);
/// Throws ConfigError when the file is not a checkpoint or the hash differs.
LearnerState checkpoint_from_json(const nlohmann::json& j, std::uint64_t config_hash);

/// Output directory for a run: the override when given, else the config's.
std::filesystem::path output_dir(const ExperimentConfig& cfg, const RunOptions& opts);

/// The worst-case disturbance for configs in analytic mode: loaded from
/// `oracle_path`, else the config's value_grid, else solved from the config's
/// oracle section.
AnalyticDisturbance resolve_analytic_disturbance(const ExperimentConfig& cfg, const RunOptions& opts);

/// Learns the policy stack and writes policy.json, metrics.csv,
/// checkpoint.json and manifest.json into the output directory.
TrainRun cmd_train(const std::filesystem::path& config_path, const RunOptions& opts = {});
/// Solves the config's oracle grid and writes value_grid.json / value_grid.csv.
ValueGrid cmd_oracle(const std::filesystem::path& config_path, const RunOptions& opts = {});
/// Extracts the set on the config's eval grid (compared when an oracle is
/// given) and writes report.json / report.csv.
EvalRun cmd_eval(const std::filesystem::path& policy_path, const std::filesystem::path& config_path,
                 const RunOptions& opts = {});
/// Trajectory CSV from `state` starting at step k (the full horizon when k < 0).
std::string cmd_rollout(const std::filesystem::path& policy_path,
                        const std::filesystem::path& config_path, const Vec& state, int k,
                        const RunOptions& opts = {});

/// Loads a policy and checks it against the config's model.
PolicyStack load_policy_for(const std::filesystem::path& policy_path, const ExperimentConfig& cfg,
                            const RunOptions& opts);

/// Parses argv and dispatches; returns the process exit code.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace reachcls
