#include "reachcls/config.hpp"

#include <cstdio>

#include "reachcls/evalset.hpp"
#include "reachcls/json_schema.hpp"

namespace reachcls {

const nlohmann::json& config_schema() {
  static const nlohmann::json schema = nlohmann::json::parse(config_schema_text());
  return schema;
}

namespace {

IntervalBounds read_bounds(const nlohmann::json& params, const char* lo_key, const char* hi_key,
                           const std::string& path) {
  const bool has_lo = params.contains(lo_key);
  const bool has_hi = params.contains(hi_key);
  if (has_lo != has_hi) {
    throw ConfigError(path + "." + (has_lo ? hi_key : lo_key),
                      std::string("must be given together with ") + (has_lo ? lo_key : hi_key));
  }
  if (!has_lo) return {};
  try {
    return IntervalBounds(params.at(lo_key).get<Vec>(), params.at(hi_key).get<Vec>());
  } catch (const InvalidArgument& e) {
    throw ConfigError(path + "." + lo_key, e.what());
  }
}

double num_or(const nlohmann::json& j, const char* key, double fallback) {
  return j.contains(key) ? j.at(key).get<double>() : fallback;
}

}  // namespace

ModelPtr build_model(const std::string& name, const nlohmann::json& params, const std::string& path) {
  const std::string ppath = path + ".params";
  const IntervalBounds u = read_bounds(params, "u_lo", "u_hi", ppath);
  const IntervalBounds d = read_bounds(params, "d_lo", "d_hi", ppath);
  const IntervalBounds box = read_bounds(params, "state_lo", "state_hi", ppath);
  static const char* quad_keys[] = {"gravity",       "angle_bound",       "thrust_bound",
                                    "yaw_rate_bound", "disturbance_bound", "planner_bound",
                                    "position_box",  "velocity_box"};
  const bool is_quad = name == "quad6d_rel" || name == "quad7d_rel" || name == "quad_rel_x";
  if (!is_quad) {
    for (const char* k : quad_keys) {
      if (params.contains(k)) throw ConfigError(ppath + "." + k, "only applies to quadrotor models");
    }
  }
  try {
    ModelPtr base;
    if (name == "point2d") {
      base = make_point2d(u.empty() ? IntervalBounds::symmetric(2, 1.0) : u);
    } else if (name == "unicycle4d") {
      base = make_unicycle4d();
    } else if (is_quad) {
      QuadParams q;
      q.gravity = num_or(params, "gravity", q.gravity);
      q.angle_bound = num_or(params, "angle_bound", q.angle_bound);
      q.thrust_bound = num_or(params, "thrust_bound", q.thrust_bound);
      q.yaw_rate_bound = num_or(params, "yaw_rate_bound", q.yaw_rate_bound);
      q.disturbance_bound = num_or(params, "disturbance_bound", q.disturbance_bound);
      q.planner_bound = num_or(params, "planner_bound", q.planner_bound);
      q.position_box = num_or(params, "position_box", q.position_box);
      q.velocity_box = num_or(params, "velocity_box", q.velocity_box);
      base = name == "quad6d_rel"   ? make_quad6d_relative(q)
             : name == "quad7d_rel" ? make_quad7d_relative(q)
                                    : make_quad_rel_x(q);
    } else {
      throw ConfigError(path + ".name", "unknown model '" + name + "'");
    }
    if (u.empty() && d.empty() && box.empty()) return base;
    return with_overrides(base, u, d, box);
  } catch (const InvalidArgument& e) {
    throw ConfigError(ppath, e.what());
  }
}

ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  const auto violations = validate_json(config_schema(), j);
  if (!violations.empty()) {
    std::string msg = violations.front().message;
    if (violations.size() > 1) msg += " (and " + std::to_string(violations.size() - 1) + " more)";
    throw ConfigError(violations.front().path, msg);
  }
  ExperimentConfig c;
  c.raw = j;
  c.name = j.at("name").get<std::string>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.model_name = j.at("model").at("name").get<std::string>();
  c.model_params = j.at("model").value("params", nlohmann::json::object());
  c.model = build_model(c.model_name, c.model_params, "model");
  c.cost = CostSpec::from_json(j.at("cost"), "cost");
  const std::size_t n = c.model->state_dim();
  if (c.cost.target.required_dim() > n) {
    throw ConfigError("cost.target", "reads state index beyond dimension " + std::to_string(n));
  }
  if (c.cost.constraint && c.cost.constraint->required_dim() > n) {
    throw ConfigError("cost.constraint", "reads state index beyond dimension " + std::to_string(n));
  }

  const auto& tg = j.at("time_grid");
  c.time_grid.dt = tg.at("dt").get<double>();
  c.time_grid.num_steps = tg.at("num_steps").get<int>();
  c.time_grid.substeps = tg.value("substeps", 1);

  const auto& lj = j.at("learner");
  LearnConfig& l = c.learn;
  l.time_grid = c.time_grid;
  l.seed = c.seed;
  l.samples_per_step = lj.at("samples_per_step").get<int>();
  if (lj.contains("train")) {
    const auto& t = lj.at("train");
    l.train.learning_rate = t.value("learning_rate", l.train.learning_rate);
    l.train.decay = t.value("decay", l.train.decay);
    l.train.grad_steps = t.value("grad_steps", l.train.grad_steps);
    l.train.batch_size = t.value("batch_size", l.train.batch_size);
    l.train.holdout_fraction = t.value("holdout_fraction", l.train.holdout_fraction);
    l.train.trace_every = t.value("trace_every", l.train.trace_every);
    l.train.rms_epsilon = t.value("rms_epsilon", l.train.rms_epsilon);
    l.train.quantize_f32 = t.value("quantize_f32", l.train.quantize_f32);
  }
  if (lj.contains("disturbance")) {
    const auto& dj = lj.at("disturbance");
    const std::string mode = dj.at("mode").get<std::string>();
    l.disturbance_mode = mode == "learn"      ? DisturbanceMode::Learn
                         : mode == "analytic" ? DisturbanceMode::Analytic
                                              : DisturbanceMode::None;
    if (dj.contains("value_grid")) {
      if (l.disturbance_mode != DisturbanceMode::Analytic) {
        throw ConfigError("learner.disturbance.value_grid", "only used with mode 'analytic'");
      }
      std::filesystem::path p = dj.at("value_grid").get<std::string>();
      c.value_grid_path = p.is_absolute() ? p : base_dir / p;
    }
  }
  if (l.disturbance_mode == DisturbanceMode::Learn && c.model->disturbance_dim() == 0) {
    throw ConfigError("learner.disturbance.mode", "model has no disturbance inputs to learn");
  }
  if (lj.contains("convergence")) {
    const auto& cj = lj.at("convergence");
    l.convergence_tolerance = cj.value("tolerance", l.convergence_tolerance);
    l.convergence_window = cj.value("window", l.convergence_window);
    l.probe_count = cj.value("probe_count", l.probe_count);
    l.stop_on_convergence = cj.value("stop", l.stop_on_convergence);
  }
  try {
    l.train.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("learner.train", e.what());
  }

  if (j.contains("oracle")) {
    c.oracle_grid = GridSpec::from_json(j.at("oracle").at("grid"), "oracle.grid");
    if (c.oracle_grid->dim() != n) {
      throw ConfigError("oracle.grid", "has " + std::to_string(c.oracle_grid->dim()) +
                                           " dimensions, model has " + std::to_string(n));
    }
    c.oracle_tolerance = j.at("oracle").value("early_stop_tolerance", c.oracle_tolerance);
  }
  if (l.disturbance_mode == DisturbanceMode::Analytic && !c.value_grid_path && !c.oracle_grid) {
    throw ConfigError("learner.disturbance", "analytic mode needs 'value_grid' or an oracle section");
  }
  if (j.contains("eval")) {
    const auto& ej = j.at("eval");
    c.eval_grid = GridSpec::from_json(ej.at("grid"), "eval.grid");
    if (c.eval_grid->dim() != n) {
      throw ConfigError("eval.grid", "has " + std::to_string(c.eval_grid->dim()) +
                                         " dimensions, model has " + std::to_string(n));
    }
    c.epsilon = ej.value("epsilon", c.epsilon);
    c.eval_decisions = ej.value("decisions", c.eval_decisions);
  }
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", path.string() + ": invalid JSON: " + e.what());
  }
  return parse_config(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

std::uint64_t config_hash(const nlohmann::json& j) {
  // nlohmann's default object type is an ordered std::map, so dump() is canonical.
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace reachcls
