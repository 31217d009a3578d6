#include "reachcls/learner.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "reachcls/parallel.hpp"
#include "reachcls/rng.hpp"

namespace reachcls {

std::string to_string(DisturbanceMode m) {
  switch (m) {
    case DisturbanceMode::None:
      return "none";
    case DisturbanceMode::Learn:
      return "learn";
    case DisturbanceMode::Analytic:
      return "analytic";
  }
  return "none";
}

void LearnConfig::validate(const ControlAffineModel& model) const {
  time_grid.validate();
  train.validate();
  if (samples_per_step < 1) throw InvalidArgument("learner: samples_per_step must be >= 1");
  if (!(convergence_tolerance > 0.0 && convergence_tolerance <= 1.0)) {
    throw InvalidArgument("learner: convergence tolerance must be in (0, 1]");
  }
  if (convergence_window < 1) throw InvalidArgument("learner: convergence window must be >= 1");
  if (probe_count < 1) throw InvalidArgument("learner: probe_count must be >= 1");
  if (disturbance_mode == DisturbanceMode::Learn && model.disturbance_dim() == 0) {
    throw InvalidArgument("learner: disturbance mode 'learn' needs a model with disturbances");
  }
  if (disturbance_mode == DisturbanceMode::Analytic && !analytic.rule) {
    throw InvalidArgument("learner: disturbance mode 'analytic' needs a rule");
  }
}

StateLabels label_state(const ControlAffineModel& model, const CostSpec& cost,
                        const PolicyStack& stack, int k, std::span<const double> s,
                        DisturbanceMode mode, StepWorkspace& ws) {
  const std::size_t n = model.state_dim();
  const std::size_t nu = model.control_dim();
  const std::size_t nd = model.disturbance_dim();
  const TimeGrid& grid = stack.time_grid();
  const IntervalBounds& ub = model.u_bounds();
  const IntervalBounds& db = model.d_bounds();

  Vec u = ub.lo;
  Vec d = db.lo;
  if (mode == DisturbanceMode::Analytic) stack.eval_disturbance_into(k, s, d);
  Vec next(n);

  auto cost_after = [&](std::span<const double> uu, std::span<const double> dd) {
    integrate_step_into(model, s, uu, dd, grid.dt, grid.substeps, next, ws);
    return rollout_cost(model, stack, next, k, cost, ws);
  };

  StateLabels out;
  out.baseline_cost = cost_after(u, d);
  out.u.assign(nu, 0);
  for (std::size_t i = 0; i < nu; ++i) {
    u[i] = ub.hi[i];
    if (cost_after(u, d) < out.baseline_cost) out.u[i] = 1;
    u[i] = ub.lo[i];
  }
  if (mode == DisturbanceMode::Learn) {
    out.d.assign(nd, 0);
    for (std::size_t j = 0; j < nd; ++j) {
      d[j] = db.hi[j];
      if (cost_after(u, d) > out.baseline_cost) out.d[j] = 1;
      d[j] = db.lo[j];
    }
  }
  return out;
}

StateLabels label_state(const ControlAffineModel& model, const CostSpec& cost,
                        const PolicyStack& stack, int k, std::span<const double> s,
                        DisturbanceMode mode) {
  if (s.size() != model.state_dim()) throw InvalidArgument("label_state: state dimension mismatch");
  if (k < 0) throw InvalidArgument("label_state: negative step");
  if (k > 0) stack.layer_index(k - 1);
  StepWorkspace ws(model);
  return label_state(model, cost, stack, k, s, mode, ws);
}

Vec sample_states(const ControlAffineModel& model, std::size_t count, std::uint64_t seed) {
  const std::size_t n = model.state_dim();
  const IntervalBounds& box = model.state_box();
  Rng rng(seed);
  Vec out(count * n);
  for (std::size_t q = 0; q < count; ++q) {
    for (std::size_t i = 0; i < n; ++i) out[q * n + i] = rng.uniform(box.lo[i], box.hi[i]);
  }
  return out;
}

SampleBatch build_step_batch(const ControlAffineModel& model, const CostSpec& cost,
                             const PolicyStack& stack, const LearnConfig& cfg, int k,
                             Vec* baseline_costs) {
  const std::size_t n = model.state_dim();
  const std::size_t count = static_cast<std::size_t>(cfg.samples_per_step);
  SampleBatch batch;
  batch.dim = n;
  batch.states = sample_states(model, count, derive_seed(cfg.seed, "sample", static_cast<std::uint64_t>(k)));
  const std::size_t nu = model.control_dim();
  const std::size_t nd = cfg.disturbance_mode == DisturbanceMode::Learn ? model.disturbance_dim() : 0;
  batch.label_columns.assign(nu + nd, Bits(count, 0));
  if (baseline_costs) baseline_costs->assign(count, 0.0);
  parallel_for(count, cfg.threads, [&](std::size_t begin, std::size_t end) {
    StepWorkspace ws(model);
    for (std::size_t q = begin; q < end; ++q) {
      StateLabels labels;
      try {
        labels = label_state(model, cost, stack, k, batch.state(q), cfg.disturbance_mode, ws);
      } catch (const NumericalBlowup& e) {
        throw NumericalBlowup(std::string(e.what()) + " while labelling sample " +
                                  format_vec(batch.state(q)) + " at step " + std::to_string(k),
                              e.state());
      }
      for (std::size_t i = 0; i < nu; ++i) batch.label_columns[i][q] = labels.u[i];
      for (std::size_t j = 0; j < nd; ++j) batch.label_columns[nu + j][q] = labels.d[j];
      if (baseline_costs) (*baseline_costs)[q] = labels.baseline_cost;
    }
  });
  return batch;
}

namespace {

double probe_agreement(const MlpClassifier& a, const MlpClassifier& b, std::span<const double> probes,
                       std::size_t n) {
  const std::size_t count = probes.size() / n;
  std::size_t same = 0;
  for (std::size_t q = 0; q < count; ++q) {
    const auto s = probes.subspan(q * n, n);
    if (a.classify(s) == b.classify(s)) ++same;
  }
  return static_cast<double>(same) / static_cast<double>(count);
}

PolicyStack fresh_stack(const ControlAffineModel& model, const LearnConfig& cfg) {
  DisturbanceSource source = DisturbanceSource::None;
  if (cfg.disturbance_mode == DisturbanceMode::Learn) source = DisturbanceSource::Learned;
  if (cfg.disturbance_mode == DisturbanceMode::Analytic) source = DisturbanceSource::Analytic;
  PolicyStack stack = PolicyStack::for_model(model, cfg.time_grid, source);
  if (source == DisturbanceSource::Analytic) stack.set_analytic_disturbance(cfg.analytic);
  return stack;
}

}  // namespace

LearnerState learn(const ControlAffineModel& model, const CostSpec& cost, const LearnConfig& cfg,
                   const LearnHooks& hooks, std::optional<LearnerState> resume) {
  cfg.validate(model);
  if (cost.target.required_dim() > model.state_dim() ||
      (cost.constraint && cost.constraint->required_dim() > model.state_dim())) {
    throw InvalidArgument("learner: cost surfaces read beyond the model's state dimension");
  }
  LearnerState state;
  if (resume) {
    state = std::move(*resume);
    if (state.stack.model_name() != model.name() || !(state.stack.time_grid() == cfg.time_grid) ||
        state.stack.depth() != static_cast<std::size_t>(state.next_k)) {
      throw InvalidArgument("learner: checkpoint does not match the configuration");
    }
    if (state.stack.disturbance_source() == DisturbanceSource::Analytic &&
        !state.stack.has_analytic_rule()) {
      state.stack.set_analytic_disturbance(cfg.analytic);
    }
  } else {
    state.stack = fresh_stack(model, cfg);
  }

  const std::size_t n = model.state_dim();
  const std::size_t nu = model.control_dim();
  const std::size_t nd = cfg.disturbance_mode == DisturbanceMode::Learn ? model.disturbance_dim() : 0;
  const Vec probes = sample_states(model, static_cast<std::size_t>(cfg.probe_count),
                                   derive_seed(cfg.seed, "probe"));
  const InputNormalizer normalizer(model.state_box());

  using Clock = std::chrono::steady_clock;
  for (int k = state.next_k; k < cfg.time_grid.num_steps; ++k) {
    if (cfg.stop_on_convergence && state.stack.converged()) break;
    const auto t0 = Clock::now();
    const SampleBatch batch = build_step_batch(model, cost, state.stack, cfg, k);
    const auto t1 = Clock::now();

    std::vector<MlpClassifier> trained(nu + nd);
    std::vector<ClassifierStepMetrics> cm(nu + nd);
    parallel_for(nu + nd, cfg.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t c = begin; c < end; ++c) {
        MlpClassifier start;
        if (k == 0) {
          start = init_mlp(n, derive_seed(cfg.seed, "init", c), normalizer);
        } else {
          const std::size_t prev = static_cast<std::size_t>(k - 1);
          start = c < nu ? state.stack.control_layers()[prev][c]
                         : state.stack.disturbance_layers()[prev][c - nu];
        }
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(cfg.seed, "train", static_cast<std::uint64_t>(k), c);
        TrainResult r = train(std::move(start), batch, c, tc);
        const Bits& labels = batch.label_columns[c];
        std::size_t ones = 0;
        for (auto b : labels) ones += b;
        cm[c].name = (c < nu ? "u" : "d") + std::to_string(c < nu ? c : c - nu);
        cm[c].label_fraction = static_cast<double>(ones) / static_cast<double>(labels.size());
        cm[c].train = std::move(r.metrics);
        trained[c] = std::move(r.classifier);
      }
    });

    StepMetrics m;
    m.k = k;
    m.agreement = std::numeric_limits<double>::quiet_NaN();
    if (k > 0) {
      const std::size_t prev = static_cast<std::size_t>(k - 1);
      double worst = 1.0;
      for (std::size_t c = 0; c < nu + nd; ++c) {
        const MlpClassifier& before = c < nu ? state.stack.control_layers()[prev][c]
                                             : state.stack.disturbance_layers()[prev][c - nu];
        worst = std::min(worst, probe_agreement(trained[c], before, probes, n));
      }
      m.agreement = worst;
      state.agreement_streak = worst >= 1.0 - cfg.convergence_tolerance ? state.agreement_streak + 1 : 0;
    }

    std::vector<MlpClassifier> control(trained.begin(), trained.begin() + static_cast<std::ptrdiff_t>(nu));
    std::vector<MlpClassifier> disturbance(trained.begin() + static_cast<std::ptrdiff_t>(nu), trained.end());
    state.stack.push_layer(std::move(control), std::move(disturbance));
    if (!state.stack.converged() && state.agreement_streak >= cfg.convergence_window) {
      state.stack.mark_converged(k);
    }
    state.next_k = k + 1;

    m.converged = state.stack.converged();
    m.classifiers = std::move(cm);
    m.label_seconds = std::chrono::duration<double>(t1 - t0).count();
    m.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    state.metrics.push_back(m);
    if (hooks.on_step) hooks.on_step(m);
    if (hooks.on_checkpoint) hooks.on_checkpoint(state);
  }
  return state;
}

// --- metrics serialization -----------------------------------------------------

nlohmann::json metrics_to_json(const StepMetrics& m) {
  nlohmann::json j;
  j["k"] = m.k;
  j["wall_seconds"] = m.wall_seconds;
  j["label_seconds"] = m.label_seconds;
  j["agreement"] = std::isnan(m.agreement) ? nlohmann::json(nullptr) : nlohmann::json(m.agreement);
  j["converged"] = m.converged;
  j["classifiers"] = nlohmann::json::array();
  for (const auto& c : m.classifiers) {
    nlohmann::json cj;
    cj["name"] = c.name;
    cj["label_fraction"] = c.label_fraction;
    cj["initial_error"] = c.train.initial_error;
    cj["final_error"] = c.train.final_error;
    cj["initial_loss"] = c.train.initial_loss;
    cj["final_loss"] = c.train.final_loss;
    cj["train_size"] = c.train.train_size;
    cj["holdout_size"] = c.train.holdout_size;
    cj["trace"] = nlohmann::json::array();
    for (const auto& t : c.train.loss_trace) {
      cj["trace"].push_back({t.step, t.heldout_error, t.heldout_loss});
    }
    j["classifiers"].push_back(std::move(cj));
  }
  return j;
}

StepMetrics metrics_from_json(const nlohmann::json& j) {
  StepMetrics m;
  m.k = j.at("k").get<int>();
  m.wall_seconds = j.at("wall_seconds").get<double>();
  m.label_seconds = j.at("label_seconds").get<double>();
  m.agreement = j.at("agreement").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                            : j.at("agreement").get<double>();
  m.converged = j.at("converged").get<bool>();
  for (const auto& cj : j.at("classifiers")) {
    ClassifierStepMetrics c;
    c.name = cj.at("name").get<std::string>();
    c.label_fraction = cj.at("label_fraction").get<double>();
    c.train.initial_error = cj.at("initial_error").get<double>();
    c.train.final_error = cj.at("final_error").get<double>();
    c.train.initial_loss = cj.at("initial_loss").get<double>();
    c.train.final_loss = cj.at("final_loss").get<double>();
    c.train.train_size = cj.at("train_size").get<std::size_t>();
    c.train.holdout_size = cj.at("holdout_size").get<std::size_t>();
    for (const auto& t : cj.at("trace")) {
      c.train.loss_trace.push_back({t.at(0).get<int>(), t.at(1).get<double>(), t.at(2).get<double>()});
    }
    m.classifiers.push_back(std::move(c));
  }
  return m;
}

std::string metrics_csv(const std::vector<StepMetrics>& metrics) {
  std::ostringstream os;
  os.precision(10);
  os << "k,classifier,wall_seconds,label_fraction,initial_error,final_error,initial_loss,final_loss,"
        "agreement,converged\n";
  for (const auto& m : metrics) {
    for (const auto& c : m.classifiers) {
      os << m.k << ',' << c.name << ',' << m.wall_seconds << ',' << c.label_fraction << ','
         << c.train.initial_error << ',' << c.train.final_error << ',' << c.train.initial_loss
         << ',' << c.train.final_loss << ',';
      if (!std::isnan(m.agreement)) os << m.agreement;
      os << ',' << (m.converged ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

}  // namespace reachcls
