#include "reachcls/app.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "reachcls/bench.hpp"
#include "reachcls/log.hpp"

namespace reachcls {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

/// Write-then-rename so an interrupted run never leaves a torn file behind.
void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  write_text_file(tmp, text);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void log_step(const StepMetrics& m, int total) {
  std::ostringstream os;
  os << "step " << m.k + 1 << "/" << total << ": labels " << fixed(m.label_seconds, 2) << " s, total "
     << fixed(m.wall_seconds, 2) << " s";
  if (!std::isnan(m.agreement)) os << ", agreement " << fixed(m.agreement, 4);
  for (const auto& c : m.classifiers) {
    os << ", " << c.name << " err " << fixed(c.train.initial_error, 3) << "->" << fixed(c.train.final_error, 3);
  }
  if (m.converged) os << " [converged]";
  log_info(os.str());
}

}  // namespace

nlohmann::json checkpoint_to_json(const LearnerState& s, std::uint64_t hash) {
  nlohmann::json j;
  j["format"] = "reachcls-checkpoint";
  j["config_hash"] = hex64(hash);
  j["next_k"] = s.next_k;
  j["agreement_streak"] = s.agreement_streak;
  j["policy"] = policy_to_json(s.stack, ParamEncoding::Compact);
  j["metrics"] = nlohmann::json::array();
  for (const auto& m : s.metrics) j["metrics"].push_back(metrics_to_json(m));
  return j;
}

LearnerState checkpoint_from_json(const nlohmann::json& j, std::uint64_t hash) {
  if (j.value("format", "") != "reachcls-checkpoint") throw ConfigError("--resume", "not a checkpoint file");
  if (j.at("config_hash").get<std::string>() != hex64(hash)) {
    throw ConfigError("--resume", "checkpoint was written for a different configuration");
  }
  LearnerState s;
  s.next_k = j.at("next_k").get<int>();
  s.agreement_streak = j.at("agreement_streak").get<int>();
  s.stack = policy_from_json(j.at("policy"));
  for (const auto& m : j.at("metrics")) s.metrics.push_back(metrics_from_json(m));
  return s;
}

fs::path output_dir(const ExperimentConfig& cfg, const RunOptions& opts) {
  return opts.out_dir ? *opts.out_dir : cfg.output_dir;
}

AnalyticDisturbance resolve_analytic_disturbance(const ExperimentConfig& cfg, const RunOptions& opts) {
  std::shared_ptr<ValueGrid> vg;
  if (opts.oracle_path) {
    vg = std::make_shared<ValueGrid>(load_value_grid(*opts.oracle_path));
  } else if (cfg.value_grid_path) {
    vg = std::make_shared<ValueGrid>(load_value_grid(*cfg.value_grid_path));
  } else if (cfg.oracle_grid) {
    log_info("solving the oracle grid for the analytic disturbance");
    OracleOptions o;
    o.threads = opts.threads;
    o.retain_all = true;
    o.early_stop_tolerance = cfg.oracle_tolerance;
    vg = std::make_shared<ValueGrid>(grid_solve(*cfg.model, cfg.cost, *cfg.oracle_grid, cfg.time_grid, o));
  } else {
    throw ConfigError("learner.disturbance", "no value grid available for the analytic disturbance");
  }
  if (vg->model_name != cfg.model_name) {
    throw ConfigError("learner.disturbance.value_grid",
                      "value grid was solved for model '" + vg->model_name + "'");
  }
  if (vg->mode != cfg.cost.mode) {
    throw ConfigError("learner.disturbance.value_grid", "value grid cost mode differs from the config");
  }
  return grid_disturbance_rule(vg, cfg.model);
}

TrainRun cmd_train(const fs::path& config_path, const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(config_path);
  const fs::path out = output_dir(cfg, opts);
  ensure_dir(out);
  const std::uint64_t hash = config_hash(cfg.raw);
  cfg.learn.threads = opts.threads;
  if (cfg.learn.disturbance_mode == DisturbanceMode::Analytic) {
    cfg.learn.analytic = resolve_analytic_disturbance(cfg, opts);
  }

  const fs::path checkpoint_path = out / "checkpoint.json";
  std::optional<LearnerState> resume;
  if (opts.resume) {
    if (fs::exists(checkpoint_path)) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(read_text_file(checkpoint_path));
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("--resume", checkpoint_path.string() + ": " + e.what());
      }
      resume = checkpoint_from_json(j, hash);
      log_info("resuming at step " + std::to_string(resume->next_k));
    } else {
      log_warn("no checkpoint at " + checkpoint_path.string() + "; starting from step 0");
    }
  }

  LearnHooks hooks;
  const int total = cfg.time_grid.num_steps;
  hooks.on_step = [total](const StepMetrics& m) { log_step(m, total); };
  hooks.on_checkpoint = [&](const LearnerState& s) {
    write_atomic(checkpoint_path, checkpoint_to_json(s, hash).dump() + "\n");
  };
  log_info("training " + cfg.name + ": model " + cfg.model_name + ", " + std::to_string(total) +
           " steps, " + std::to_string(cfg.learn.samples_per_step) + " samples per step");
  TrainRun run;
  run.state = learn(*cfg.model, cfg.cost, cfg.learn, hooks, std::move(resume));

  run.policy_path = out / "policy.json";
  run.metrics_path = out / "metrics.csv";
  run.manifest_path = out / "manifest.json";
  write_atomic(run.policy_path, policy_to_string(run.state.stack));
  write_atomic(run.metrics_path, metrics_csv(run.state.metrics));
  if (opts.truncate_converged && run.state.stack.converged()) {
    PolicyStack small = run.state.stack;
    small.truncate_to_converged();
    write_atomic(out / "policy_converged.json", policy_to_string(small));
  }
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  nlohmann::json manifest;
  manifest["command"] = "train";
  manifest["name"] = cfg.name;
  manifest["config"] = config_path.string();
  manifest["config_hash"] = hex64(hash);
  manifest["seed"] = cfg.seed;
  manifest["wall_seconds"] = run.wall_seconds;
  manifest["steps"] = run.state.stack.depth();
  manifest["converged"] = run.state.stack.converged();
  manifest["converged_step"] = run.state.stack.converged_step();
  manifest["parameter_count"] = run.state.stack.parameter_count();
  manifest["files"] = {run.policy_path.filename().string(), run.metrics_path.filename().string(),
                       checkpoint_path.filename().string()};
  write_atomic(run.manifest_path, manifest.dump(2) + "\n");
  log_info("wrote " + run.policy_path.string() + " (" + fixed(run.wall_seconds, 1) + " s)");
  return run;
}

ValueGrid cmd_oracle(const fs::path& config_path, const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = load_config(config_path);
  if (cfg.model->state_dim() > kOracleMaxDim) {
    throw ConfigError("oracle", "model " + cfg.model_name + " has " + std::to_string(cfg.model->state_dim()) +
                                    " state dimensions; dense grid solving is limited to " +
                                    std::to_string(kOracleMaxDim) + " (practical bound for dense grids)");
  }
  if (!cfg.oracle_grid) throw ConfigError("oracle", "config has no oracle section");
  const fs::path out = output_dir(cfg, opts);
  ensure_dir(out);
  OracleOptions o;
  o.threads = opts.threads;
  o.early_stop_tolerance = cfg.oracle_tolerance;
  // Per-step values back the analytic disturbance rule; other configs keep only the final array.
  o.retain_all = cfg.learn.disturbance_mode == DisturbanceMode::Analytic;
  log_info("solving " + std::to_string(cfg.oracle_grid->node_count()) + " grid nodes for " +
           std::to_string(cfg.time_grid.num_steps) + " steps");
  ValueGrid vg = grid_solve(*cfg.model, cfg.cost, *cfg.oracle_grid, cfg.time_grid, o);
  save_value_grid(vg, out / "value_grid.json");
  save_value_grid(vg, out / "value_grid.csv");
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::json manifest;
  manifest["command"] = "oracle";
  manifest["name"] = cfg.name;
  manifest["config"] = config_path.string();
  manifest["config_hash"] = hex64(config_hash(cfg.raw));
  manifest["seed"] = cfg.seed;
  manifest["wall_seconds"] = wall;
  manifest["steps_run"] = vg.steps_run;
  manifest["converged"] = vg.converged;
  manifest["node_count"] = vg.spec.node_count();
  write_atomic(out / "manifest_oracle.json", manifest.dump(2) + "\n");
  log_info("oracle: " + std::to_string(vg.steps_run) + " sweeps" + (vg.converged ? " (converged)" : "") +
           ", " + fixed(wall, 1) + " s");
  return vg;
}

PolicyStack load_policy_for(const fs::path& policy_path, const ExperimentConfig& cfg,
                            const RunOptions& opts) {
  PolicyStack stack = load_policy(policy_path);
  if (stack.model_name() != cfg.model_name) {
    throw ConfigError("model.name", "policy was trained for model '" + stack.model_name() +
                                        "', config names '" + cfg.model_name + "'");
  }
  if (stack.state_dim() != cfg.model->state_dim() || !(stack.u_bounds().lo == cfg.model->u_bounds().lo) ||
      !(stack.u_bounds().hi == cfg.model->u_bounds().hi)) {
    throw ConfigError("model.params", "policy input bounds or dimensions differ from the config's model");
  }
  if (stack.disturbance_source() == DisturbanceSource::Analytic) {
    stack.set_analytic_disturbance(resolve_analytic_disturbance(cfg, opts));
  }
  return stack;
}

EvalRun cmd_eval(const fs::path& policy_path, const fs::path& config_path, const RunOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = load_config(config_path);
  if (!cfg.eval_grid) throw ConfigError("eval", "config has no eval section");
  const PolicyStack stack = load_policy_for(policy_path, cfg, opts);
  const fs::path out = output_dir(cfg, opts);
  ensure_dir(out);
  ExtractOptions eo;
  eo.threads = opts.threads;
  eo.decisions = opts.decisions || cfg.eval_decisions;
  EvalRun run;
  run.report = extract_set(*cfg.model, stack, *cfg.eval_grid, cfg.cost, eo);
  if (opts.oracle_path) {
    const ValueGrid vg = load_value_grid(*opts.oracle_path);
    run.report = compare_sets(std::move(run.report), vg, cfg.epsilon);
  }
  run.json_path = out / "report.json";
  run.csv_path = out / "report.csv";
  save_report(run.report, run.json_path);
  save_report(run.report, run.csv_path);
  const auto& s = run.report.summary;
  std::ostringstream os;
  os << "eval: " << s.members << "/" << s.nodes << " members";
  if (run.report.compared()) {
    os << ", " << s.violations << " violations (fraction " << fixed(s.violation_fraction, 4) << " at epsilon "
       << run.report.epsilon << ")";
  }
  if (!run.report.failures.empty()) os << ", " << run.report.failures.size() << " failed nodes";
  os << ", " << fixed(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1) << " s";
  log_info(os.str());
  return run;
}

std::string cmd_rollout(const fs::path& policy_path, const fs::path& config_path, const Vec& state, int k,
                        const RunOptions& opts) {
  const ExperimentConfig cfg = load_config(config_path);
  const PolicyStack stack = load_policy_for(policy_path, cfg, opts);
  if (state.size() != cfg.model->state_dim()) {
    throw ConfigError("--state", "has " + std::to_string(state.size()) + " components, model " +
                                     cfg.model_name + " needs " + std::to_string(cfg.model->state_dim()));
  }
  const int k_start = k < 0 ? stack.horizon_steps() : k;
  const Trajectory traj = rollout_trajectory(*cfg.model, stack, state, k_start);
  const std::string csv =
      trajectory_csv(traj, cfg.cost, cfg.model->control_dim(), cfg.model->disturbance_dim());
  if (opts.out_dir) {
    ensure_dir(*opts.out_dir);
    write_text_file(*opts.out_dir / "trajectory.csv", csv);
  }
  return csv;
}

// --- command line ------------------------------------------------------------------

namespace {

Vec parse_state(const std::string& text) {
  Vec out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ConfigError("--state", "cannot parse '" + item + "' as a number");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--state", "empty state");
  return out;
}

int exit_code_for_current_exception() {
  try {
    throw;
  } catch (const ConfigError& e) {
    log_error(std::string("config error: ") + e.what());
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    log_error(std::string("invalid argument: ") + e.what());
    return kExitConfig;
  } catch (const NumericalBlowup& e) {
    log_error(std::string("numerical failure: ") + e.what());
    return kExitNumerical;
  } catch (const IoError& e) {
    log_error(std::string("I/O error: ") + e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    log_error(std::string("error: ") + e.what());
    return kExitFailure;
  }
}

}  // namespace

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Classification-based approximate reachability: learn bang-bang policies, solve grid "
               "oracles, extract and verify reach-avoid sets."};
  app.name("reachcls");
  app.require_subcommand(1);

  RunOptions opts;
  std::string config, policy, oracle, out, state_text;
  int k = -1;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", out, "Output directory (overrides output_dir)");
    sub->add_option("--threads", opts.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  };

  auto* train = app.add_subcommand("train", "Learn a policy stack");
  train->add_option("--config", config, "Experiment config")->required();
  train->add_option("--oracle", oracle, "Solved value grid for an analytic disturbance");
  train->add_flag("--resume", opts.resume, "Continue from checkpoint.json in the output directory");
  train->add_flag("--truncate-converged", opts.truncate_converged,
                  "Also write the deepest layer alone when converged");
  add_common(train);

  auto* orc = app.add_subcommand("oracle", "Solve the dense-grid value function");
  orc->add_option("--config", config, "Experiment config")->required();
  add_common(orc);

  auto* eval = app.add_subcommand("eval", "Extract the induced set on the eval grid");
  eval->add_option("--policy", policy, "Policy file")->required();
  eval->add_option("--config", config, "Experiment config")->required();
  eval->add_option("--oracle", oracle, "Value grid to compare against");
  eval->add_flag("--decisions", opts.decisions, "Export per-node control decisions");
  add_common(eval);

  auto* roll = app.add_subcommand("rollout", "Simulate one trajectory");
  roll->add_option("--policy", policy, "Policy file")->required();
  roll->add_option("--config", config, "Experiment config")->required();
  roll->add_option("--state", state_text, "Initial state, comma separated (use --state=-1,0)")->required();
  roll->add_option("--k", k, "Start step (default: full horizon)");
  roll->add_option("--oracle", oracle, "Value grid for an analytic disturbance");
  add_common(roll);

  auto* check = app.add_subcommand("validate-config", "Check a config against the schema");
  check->add_option("--config", config, "Experiment config")->required();

  std::string bench_name;
  bool list = false;
  auto* bench = app.add_subcommand("bench-config", "Print a canned benchmark config");
  bench->add_option("name", bench_name, "Benchmark name");
  bench->add_flag("--list", list, "List benchmark names");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  if (!out.empty()) opts.out_dir = out;
  if (!oracle.empty()) opts.oracle_path = oracle;

  try {
    if (*train) {
      cmd_train(config, opts);
    } else if (*orc) {
      cmd_oracle(config, opts);
    } else if (*eval) {
      cmd_eval(policy, config, opts);
    } else if (*roll) {
      const std::string csv = cmd_rollout(policy, config, parse_state(state_text), k, opts);
      if (!opts.out_dir) std::cout << csv;
    } else if (*check) {
      const ExperimentConfig cfg = load_config(config);
      std::cout << "ok: " << cfg.name << " (config hash " << hex64(config_hash(cfg.raw)) << ")\n";
    } else if (*bench) {
      if (list || bench_name.empty()) {
        for (const auto& n : bench_names()) std::cout << n << '\n';
      } else {
        std::cout << bench_by_name(bench_name).dump(2) << '\n';
      }
    }
  } catch (...) {
    return exit_code_for_current_exception();
  }
  return kExitOk;
}

}  // namespace reachcls
