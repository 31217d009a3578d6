#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reachcls/cost.hpp"
#include "reachcls/dynamics.hpp"
#include "reachcls/nn.hpp"
#include "reachcls/policy.hpp"
#include "reachcls/sim.hpp"

namespace reachcls {

enum class DisturbanceMode { None, Learn, Analytic };

std::string to_string(DisturbanceMode m);

struct LearnConfig {
  TimeGrid time_grid;
  int samples_per_step = 1000;
  TrainConfig train;
  std::uint64_t seed = 0;
  DisturbanceMode disturbance_mode = DisturbanceMode::None;
  /// Required when disturbance_mode is Analytic.
  AnalyticDisturbance analytic;
  /// A step agrees with its predecessor when at least 1 - tolerance of the
  /// probe decisions coincide for every classifier.
  double convergence_tolerance = 0.01;
  int convergence_window = 3;
  int probe_count = 2000;
  bool stop_on_convergence = false;
  int threads = 0;

  void validate(const ControlAffineModel& model) const;
};

struct StateLabels {
  Bits u;
  Bits d;
  /// Cost of the all-min baseline step followed by the existing stack.
  double baseline_cost = 0.0;
};

/// Labels one sampled state at step k against the stack's layers k-1..0:
/// control dim i is labelled 1 iff flipping only u_i to its max strictly lowers
/// the baseline cost; disturbance dim j is labelled 1 iff flipping only d_j
/// strictly raises it. In Analytic mode the baseline disturbance is the rule's
/// output and no disturbance labels are produced.
StateLabels label_state(const ControlAffineModel& model, const CostSpec& cost,
                        const PolicyStack& stack, int k, std::span<const double> s,
                        DisturbanceMode mode, StepWorkspace& ws);
StateLabels label_state(const ControlAffineModel& model, const CostSpec& cost,
                        const PolicyStack& stack, int k, std::span<const double> s,
                        DisturbanceMode mode);

struct ClassifierStepMetrics {
  std::string name;  // "u0", "d1", ...
  double label_fraction = 0.0;
  TrainMetrics train;
};

struct StepMetrics {
  int k = 0;
  double wall_seconds = 0.0;
  double label_seconds = 0.0;
  /// Minimum per-classifier probe agreement with the previous layer; NaN at k = 0.
  double agreement = 0.0;
  bool converged = false;
  std::vector<ClassifierStepMetrics> classifiers;
};

/// Everything needed to resume learning after step next_k - 1.
struct LearnerState {
  PolicyStack stack;
  int next_k = 0;
  int agreement_streak = 0;
  std::vector<StepMetrics> metrics;
};

struct LearnHooks {
  std::function<void(const StepMetrics&)> on_step;
  std::function<void(const LearnerState&)> on_checkpoint;
};

/// Backward dynamic programming over k = 0..num_steps-1: sample, label, train
/// one classifier per input dimension (warm-started from the previous step),
/// append the layer.
LearnerState learn(const ControlAffineModel& model, const CostSpec& cost, const LearnConfig& cfg,
                   const LearnHooks& hooks = {}, std::optional<LearnerState> resume = std::nullopt);

/// Uniform samples from the model's state box (row-major).
Vec sample_states(const ControlAffineModel& model, std::size_t count, std::uint64_t seed);

/// Samples and labels for step k, as used by learn().
SampleBatch build_step_batch(const ControlAffineModel& model, const CostSpec& cost,
                             const PolicyStack& stack, const LearnConfig& cfg, int k,
                             Vec* baseline_costs = nullptr);

nlohmann::json metrics_to_json(const StepMetrics& m);
StepMetrics metrics_from_json(const nlohmann::json& j);
/// One row per (step, classifier): k,classifier,wall_seconds,label_fraction,
/// initial_error,final_error,initial_loss,final_loss,agreement,converged.
std::string metrics_csv(const std::vector<StepMetrics>& metrics);

}  // namespace reachcls
