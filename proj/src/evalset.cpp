#include "reachcls/evalset.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "reachcls/parallel.hpp"

namespace reachcls {

double estimate_value(const ControlAffineModel& model, const PolicyStack& stack,
                      std::span<const double> s, const CostSpec& cost) {
  return rollout_cost(model, stack, s, stack.horizon_steps(), cost);
}

double estimate_value(const ControlAffineModel& model, const PolicyStack& stack,
                      std::span<const double> s, const CostSpec& cost, int k_start) {
  return rollout_cost(model, stack, s, k_start, cost);
}

SetSummary summarize(const SetReport& report) {
  SetSummary sum;
  sum.nodes = report.values.size();
  for (std::size_t q = 0; q < sum.nodes; ++q) {
    if (!std::isnan(report.values[q])) ++sum.evaluated;
    if (report.member[q]) ++sum.members;
    if (!report.violation.empty() && report.violation[q]) ++sum.violations;
  }
  sum.member_fraction = sum.nodes ? static_cast<double>(sum.members) / sum.nodes : 0.0;
  const std::size_t denom = report.mode == CostMode::ReachAvoid ? sum.members : sum.evaluated;
  sum.violation_fraction = denom ? static_cast<double>(sum.violations) / denom : 0.0;
  return sum;
}

SetReport extract_set(const ControlAffineModel& model, const PolicyStack& stack, const GridSpec& spec,
                      const CostSpec& cost, const ExtractOptions& opts) {
  spec.validate();
  const std::size_t n = model.state_dim();
  if (spec.dim() != n) throw InvalidArgument("extract_set: grid dimension does not match the model");
  const int k_start = opts.k_start < 0 ? stack.horizon_steps() : opts.k_start;
  const Vec probe = spec.node(0);
  rollout_cost(model, stack, probe, k_start, cost);  // argument checks once, up front

  SetReport r;
  r.model_name = std::string(model.name());
  r.spec = spec;
  r.mode = cost.mode;
  r.k_start = k_start;
  const std::size_t nodes = spec.node_count();
  r.values.assign(nodes, 0.0);
  r.member.assign(nodes, 0);
  const bool want_decisions = opts.decisions && k_start > 0;
  if (want_decisions) {
    r.decision_dim = model.control_dim();
    r.decisions.assign(nodes * r.decision_dim, 0.0);
  }

  // One failure slot per node keeps the output independent of scheduling.
  std::vector<std::string> errors(nodes);
  parallel_for(nodes, opts.threads, [&](std::size_t begin, std::size_t end) {
    StepWorkspace ws(model);
    Vec s(n);
    for (std::size_t q = begin; q < end; ++q) {
      spec.node(q, s);
      try {
        const double v = rollout_cost(model, stack, s, k_start, cost, ws);
        r.values[q] = v;
        r.member[q] = v <= 0.0 ? 1 : 0;
      } catch (const NumericalBlowup& e) {
        r.values[q] = std::numeric_limits<double>::quiet_NaN();
        errors[q] = e.what();
      }
      if (want_decisions) {
        stack.eval_control_into(k_start - 1, s,
                                std::span<double>(r.decisions.data() + q * r.decision_dim, r.decision_dim));
      }
    }
  });
  for (std::size_t q = 0; q < nodes; ++q) {
    if (!errors[q].empty()) r.failures.push_back({q, errors[q]});
  }
  r.summary = summarize(r);
  return r;
}

SetReport compare_sets(SetReport report, const ValueGrid& oracle, double epsilon) {
  if (!(report.spec == oracle.spec)) {
    throw InvalidArgument("compare_sets: report and oracle grids differ");
  }
  if (report.mode != oracle.mode) throw InvalidArgument("compare_sets: cost modes differ");
  if (!(epsilon >= 0.0)) throw InvalidArgument("compare_sets: epsilon must be >= 0");
  const Vec& ov = oracle.values();
  const std::size_t nodes = report.values.size();
  report.oracle_values = ov;
  report.epsilon = epsilon;
  report.violation.assign(nodes, 0);
  for (std::size_t q = 0; q < nodes; ++q) {
    const double v = report.values[q];
    if (std::isnan(v)) continue;
    if (report.mode == CostMode::ReachAvoid) {
      report.violation[q] = report.member[q] && ov[q] > epsilon ? 1 : 0;
    } else {
      report.violation[q] = v < ov[q] - epsilon ? 1 : 0;
    }
  }
  report.summary = summarize(report);
  return report;
}

// --- export ---------------------------------------------------------------------

namespace {

void put_number(std::ostream& os, double v) {
  if (std::isnan(v)) return;  // empty field
  os << v;
}

}  // namespace

std::string report_csv(const SetReport& r) {
  std::ostringstream os;
  os.precision(17);
  const std::size_t n = r.spec.dim();
  for (std::size_t i = 0; i < n; ++i) os << 'x' << i << ',';
  os << "value,member";
  if (r.compared()) os << ",oracle_value,violation";
  for (std::size_t i = 0; i < r.decision_dim; ++i) os << ",u" << i;
  os << '\n';
  Vec s(n);
  for (std::size_t q = 0; q < r.values.size(); ++q) {
    r.spec.node(q, s);
    for (double x : s) os << x << ',';
    put_number(os, r.values[q]);
    os << ',' << static_cast<int>(r.member[q]);
    if (r.compared()) {
      os << ',';
      put_number(os, (*r.oracle_values)[q]);
      os << ',' << static_cast<int>(r.violation[q]);
    }
    for (std::size_t i = 0; i < r.decision_dim; ++i) os << ',' << r.decisions[q * r.decision_dim + i];
    os << '\n';
  }
  return os.str();
}

nlohmann::json report_to_json(const SetReport& r) {
  nlohmann::json j;
  j["format"] = "reachcls-set-report";
  j["format_version"] = 1;
  j["model_name"] = r.model_name;
  j["mode"] = to_string(r.mode);
  j["k_start"] = r.k_start;
  j["grid"] = r.spec.to_json();
  nlohmann::json values = nlohmann::json::array();
  for (double v : r.values) values.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
  j["values"] = std::move(values);
  j["member"] = std::vector<int>(r.member.begin(), r.member.end());
  if (r.decision_dim > 0) {
    j["decision_dim"] = r.decision_dim;
    j["decisions"] = r.decisions;
  }
  j["failures"] = nlohmann::json::array();
  for (const auto& f : r.failures) j["failures"].push_back({{"node", f.node}, {"message", f.message}});
  if (r.compared()) {
    j["oracle_values"] = *r.oracle_values;
    j["violation"] = std::vector<int>(r.violation.begin(), r.violation.end());
    j["epsilon"] = r.epsilon;
  }
  const SetSummary& s = r.summary;
  j["summary"] = {{"nodes", s.nodes},
                  {"evaluated", s.evaluated},
                  {"members", s.members},
                  {"violations", s.violations},
                  {"member_fraction", s.member_fraction},
                  {"violation_fraction", s.violation_fraction}};
  return j;
}

SetReport report_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "reachcls-set-report") {
    throw ConfigError("format", "not a set-report file");
  }
  SetReport r;
  try {
    r.model_name = j.at("model_name").get<std::string>();
    r.mode = cost_mode_from_string(j.at("mode").get<std::string>());
    r.k_start = j.at("k_start").get<int>();
    r.spec = GridSpec::from_json(j.at("grid"), "grid");
    for (const auto& v : j.at("values")) {
      r.values.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
    }
    for (int m : j.at("member").get<std::vector<int>>()) r.member.push_back(m ? 1 : 0);
    if (j.contains("decisions")) {
      r.decision_dim = j.at("decision_dim").get<std::size_t>();
      r.decisions = j.at("decisions").get<Vec>();
    }
    for (const auto& f : j.at("failures")) {
      r.failures.push_back({f.at("node").get<std::size_t>(), f.at("message").get<std::string>()});
    }
    if (j.contains("oracle_values")) {
      r.oracle_values = j.at("oracle_values").get<Vec>();
      for (int m : j.at("violation").get<std::vector<int>>()) r.violation.push_back(m ? 1 : 0);
      r.epsilon = j.at("epsilon").get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("", std::string("malformed set report: ") + e.what());
  }
  const std::size_t nodes = r.spec.node_count();
  if (r.values.size() != nodes || r.member.size() != nodes ||
      (r.compared() && (r.oracle_values->size() != nodes || r.violation.size() != nodes)) ||
      r.decisions.size() != nodes * r.decision_dim) {
    throw ConfigError("values", "array lengths do not match the grid node count");
  }
  r.summary = summarize(r);
  return r;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void save_report(const SetReport& report, const std::filesystem::path& path) {
  if (path.extension() == ".csv") {
    write_text_file(path, report_csv(report));
  } else {
    write_text_file(path, report_to_json(report).dump() + "\n");
  }
}

SetReport load_report(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

std::string trajectory_csv(const Trajectory& traj, const CostSpec& cost, std::size_t control_dim,
                           std::size_t disturbance_dim) {
  std::ostringstream os;
  os.precision(17);
  const std::size_t n = traj.states.empty() ? 0 : traj.states.front().size();
  os << 't';
  for (std::size_t i = 0; i < n; ++i) os << ",x" << i;
  for (std::size_t i = 0; i < control_dim; ++i) os << ",u" << i;
  for (std::size_t i = 0; i < disturbance_dim; ++i) os << ",d" << i;
  os << ",l,g\n";
  for (std::size_t r = 0; r < traj.states.size(); ++r) {
    os << traj.times[r];
    for (double x : traj.states[r]) os << ',' << x;
    const bool has_inputs = r < traj.controls.size();
    for (std::size_t i = 0; i < control_dim; ++i) {
      os << ',';
      if (has_inputs) os << traj.controls[r][i];
    }
    for (std::size_t i = 0; i < disturbance_dim; ++i) {
      os << ',';
      if (has_inputs) os << traj.disturbances[r][i];
    }
    os << ',' << cost.l(traj.states[r]) << ',';
    // An absent constraint is reported as an empty field rather than -inf.
    if (cost.constraint) os << cost.g(traj.states[r]);
    os << '\n';
  }
  return os.str();
}

}  // namespace reachcls
