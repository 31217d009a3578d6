#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "reachcls/cost.hpp"
#include "reachcls/dynamics.hpp"
#include "reachcls/learner.hpp"
#include "reachcls/oracle.hpp"
#include "reachcls/sim.hpp"

namespace reachcls {

/// The JSON schema every experiment configuration must satisfy (docs/config.schema.json).
std::string_view config_schema_text();
const nlohmann::json& config_schema();

struct ExperimentConfig {
  std::string name;
  std::uint64_t seed = 0;
  std::string model_name;
  nlohmann::json model_params = nlohmann::json::object();
  ModelPtr model;
  CostSpec cost{ImplicitSurface::sphere({0.0}, 0.0)};
  TimeGrid time_grid;
  /// Learner settings; `learn.analytic` is attached by the caller when the
  /// disturbance mode is analytic.
  LearnConfig learn;
  /// Resolved path of a solved value grid backing the analytic disturbance;
  /// when absent the oracle section is solved instead.
  std::optional<std::filesystem::path> value_grid_path;
  std::optional<GridSpec> oracle_grid;
  double oracle_tolerance = 1e-6;
  std::optional<GridSpec> eval_grid;
  double epsilon = 0.05;
  bool eval_decisions = false;
  std::filesystem::path output_dir = "out";
  /// The document as read, used for hashing and manifests.
  nlohmann::json raw;
};

/// Schema check followed by semantic checks; every failure is a ConfigError
/// naming the offending field. Relative paths inside the config resolve
/// against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Builds a named model with optional parameter overrides.
ModelPtr build_model(const std::string& name, const nlohmann::json& params,
                     const std::string& path = "model");

/// FNV-1a 64-bit hash of the compact dump of `j` (object keys sorted).
std::uint64_t config_hash(const nlohmann::json& j);
std::string hex64(std::uint64_t v);

}  // namespace reachcls
