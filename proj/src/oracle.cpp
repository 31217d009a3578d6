#include "reachcls/oracle.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>

#include "reachcls/parallel.hpp"

namespace reachcls {

// --- GridSpec ------------------------------------------------------------------

GridSpec::GridSpec(Vec lo_, Vec hi_, std::vector<int> points_, std::vector<std::uint8_t> periodic_)
    : lo(std::move(lo_)), hi(std::move(hi_)), points(std::move(points_)), periodic(std::move(periodic_)) {
  validate();
}

std::size_t GridSpec::node_count() const {
  std::size_t n = 1;
  for (int p : points) n *= static_cast<std::size_t>(p);
  return n;
}

double GridSpec::spacing(std::size_t i) const {
  if (is_periodic(i)) return (hi[i] - lo[i]) / points[i];
  if (points[i] <= 1) return 0.0;
  return (hi[i] - lo[i]) / (points[i] - 1);
}

double GridSpec::coord(std::size_t i, int idx) const {
  if (!is_periodic(i) && idx == points[i] - 1) return hi[i];
  return lo[i] + idx * spacing(i);
}

void GridSpec::node(std::size_t index, std::span<double> out) const {
  for (std::size_t i = dim(); i-- > 0;) {
    const auto p = static_cast<std::size_t>(points[i]);
    out[i] = coord(i, static_cast<int>(index % p));
    index /= p;
  }
}

Vec GridSpec::node(std::size_t index) const {
  Vec out(dim());
  node(index, out);
  return out;
}

double GridSpec::cell_diameter() const {
  double sum = 0.0;
  for (std::size_t i = 0; i < dim(); ++i) sum += spacing(i) * spacing(i);
  return std::sqrt(sum);
}

void GridSpec::validate() const {
  if (lo.empty()) throw InvalidArgument("grid: no dimensions");
  if (hi.size() != lo.size() || points.size() != lo.size()) {
    throw InvalidArgument("grid: lo, hi and points must have equal length");
  }
  if (!periodic.empty() && periodic.size() != lo.size()) {
    throw InvalidArgument("grid: periodic flags must match the dimension");
  }
  for (std::size_t i = 0; i < dim(); ++i) {
    if (!std::isfinite(lo[i]) || !std::isfinite(hi[i])) throw InvalidArgument("grid: non-finite bound");
    if (points[i] < 1) throw InvalidArgument("grid: points must be >= 1 in dim " + std::to_string(i));
    if (lo[i] > hi[i]) throw InvalidArgument("grid: lo > hi in dim " + std::to_string(i));
    if (points[i] == 1 && lo[i] != hi[i]) {
      throw InvalidArgument("grid: singleton dim " + std::to_string(i) + " needs lo == hi");
    }
    if (points[i] > 1 && !(lo[i] < hi[i])) {
      throw InvalidArgument("grid: lo must be < hi in dim " + std::to_string(i));
    }
    if (is_periodic(i) && points[i] < 2) {
      throw InvalidArgument("grid: periodic dim " + std::to_string(i) + " needs >= 2 points");
    }
  }
  if (node_count() > (std::size_t{1} << 32)) throw InvalidArgument("grid: too many nodes");
}

void GridSpec::validate_oracle() const {
  validate();
  for (std::size_t i = 0; i < dim(); ++i) {
    if (points[i] < 3 || points[i] % 2 == 0) {
      throw InvalidArgument("grid: oracle grids need an odd number (>= 3) of points per dim, dim " +
                            std::to_string(i) + " has " + std::to_string(points[i]));
    }
  }
}

nlohmann::json GridSpec::to_json() const {
  nlohmann::json j;
  j["lo"] = lo;
  j["hi"] = hi;
  j["points"] = points;
  if (!periodic.empty()) {
    std::vector<bool> flags(periodic.begin(), periodic.end());
    j["periodic"] = flags;
  }
  return j;
}

GridSpec GridSpec::from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  GridSpec g;
  try {
    g.lo = j.at("lo").get<Vec>();
    g.hi = j.at("hi").get<Vec>();
    g.points = j.at("points").get<std::vector<int>>();
    if (j.contains("periodic")) {
      for (bool b : j.at("periodic").get<std::vector<bool>>()) g.periodic.push_back(b ? 1 : 0);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path, std::string("malformed grid: ") + e.what());
  }
  try {
    g.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
  return g;
}

// --- interpolation ---------------------------------------------------------------

namespace {

/// Per-dimension cell lookup: lower index, upper index, fraction toward upper.
struct Axis {
  std::size_t i0 = 0;
  std::size_t i1 = 0;
  double f = 0.0;
};

Axis locate(const GridSpec& spec, std::size_t i, double x, bool& clamped) {
  Axis a;
  const int p = spec.points[i];
  if (p == 1) {
    if (x != spec.lo[i]) clamped = true;
    return a;
  }
  const double h = spec.spacing(i);
  double t = (x - spec.lo[i]) / h;
  if (spec.is_periodic(i)) {
    t = std::fmod(t, static_cast<double>(p));
    if (t < 0.0) t += p;
    double c = std::floor(t);
    if (c >= p) c = 0.0;  // fmod rounding at the seam
    a.i0 = static_cast<std::size_t>(c);
    a.i1 = (a.i0 + 1) % static_cast<std::size_t>(p);
    a.f = t - c;
    return a;
  }
  if (t < 0.0) {
    clamped = clamped || t < -1e-12;
    t = 0.0;
  } else if (t > p - 1) {
    clamped = clamped || t > p - 1 + 1e-12;
    t = p - 1;
  }
  double c = std::floor(t);
  if (c > p - 2) c = p - 2;
  a.i0 = static_cast<std::size_t>(c);
  a.i1 = a.i0 + 1;
  a.f = t - c;
  return a;
}

}  // namespace

double interp(const GridSpec& spec, std::span<const double> values, std::span<const double> s,
              bool* clamped) {
  const std::size_t d = spec.dim();
  if (s.size() != d) throw InvalidArgument("interp: state dimension mismatch");
  if (values.size() != spec.node_count()) throw InvalidArgument("interp: value array size mismatch");
  std::array<Axis, 16> axes{};
  std::array<std::size_t, 16> stride{};
  if (d > axes.size()) throw InvalidArgument("interp: too many dimensions");
  bool flag = false;
  std::size_t st = 1;
  for (std::size_t i = d; i-- > 0;) {
    axes[i] = locate(spec, i, s[i], flag);
    stride[i] = st;
    st *= static_cast<std::size_t>(spec.points[i]);
  }
  if (clamped) *clamped = flag;
  double sum = 0.0;
  for (std::size_t c = 0; c < (std::size_t{1} << d); ++c) {
    double w = 1.0;
    std::size_t idx = 0;
    for (std::size_t i = 0; i < d; ++i) {
      const bool up = (c >> i) & 1U;
      const double wi = up ? axes[i].f : 1.0 - axes[i].f;
      if (wi == 0.0) {
        w = 0.0;
        break;
      }
      w *= wi;
      idx += (up ? axes[i].i1 : axes[i].i0) * stride[i];
    }
    if (w != 0.0) sum += w * values[idx];
  }
  return sum;
}

const Vec& ValueGrid::values_at(int k) const {
  if (k < 0) throw InvalidArgument("value grid: negative step");
  if (k >= steps_run) return values();
  if (!retains_all()) {
    throw InvalidArgument("value grid: step " + std::to_string(k) + " was not retained");
  }
  return history[static_cast<std::size_t>(k)];
}

// --- solver ----------------------------------------------------------------------

namespace {

/// Interpolation stencil of one successor state: 2^dim (index, weight) pairs.
struct StencilTable {
  std::size_t width = 0;
  std::vector<std::uint32_t> index;
  Vec weight;
};

void fill_stencil(const GridSpec& spec, std::span<const double> s, std::uint32_t* idx, double* w) {
  const std::size_t d = spec.dim();
  std::array<Axis, kOracleMaxDim> axes{};
  std::array<std::size_t, kOracleMaxDim> stride{};
  bool flag = false;
  std::size_t st = 1;
  for (std::size_t i = d; i-- > 0;) {
    axes[i] = locate(spec, i, s[i], flag);
    stride[i] = st;
    st *= static_cast<std::size_t>(spec.points[i]);
  }
  for (std::size_t c = 0; c < (std::size_t{1} << d); ++c) {
    double wc = 1.0;
    std::size_t at = 0;
    for (std::size_t i = 0; i < d; ++i) {
      const bool up = (c >> i) & 1U;
      wc *= up ? axes[i].f : 1.0 - axes[i].f;
      at += (up ? axes[i].i1 : axes[i].i0) * stride[i];
    }
    idx[c] = static_cast<std::uint32_t>(at);
    w[c] = wc;
  }
}

double apply_stencil(const Vec& v, const std::uint32_t* idx, const double* w, std::size_t width) {
  double sum = 0.0;
  for (std::size_t c = 0; c < width; ++c) sum += w[c] * v[idx[c]];
  return sum;
}

constexpr std::size_t kStencilBudgetBytes = std::size_t{768} << 20;

}  // namespace

ValueGrid grid_solve(const ControlAffineModel& model, const CostSpec& cost, const GridSpec& spec,
                     const TimeGrid& time_grid, const OracleOptions& opts) {
  const std::size_t n = model.state_dim();
  if (n > kOracleMaxDim) {
    throw InvalidArgument("oracle: model " + std::string(model.name()) + " has " + std::to_string(n) +
                          " state dimensions; grid solving is limited to " +
                          std::to_string(kOracleMaxDim) + " (practical bound for dense grids)");
  }
  if (spec.dim() != n) throw InvalidArgument("oracle: grid dimension does not match the model");
  spec.validate_oracle();
  time_grid.validate();
  if (cost.mode == CostMode::MaxTracking && cost.constraint) {
    throw InvalidArgument("oracle: max-tracking costs take no constraint");
  }
  if (model.control_dim() > 8 || model.disturbance_dim() > 8) {
    throw InvalidArgument("oracle: too many input dimensions for corner enumeration");
  }

  const std::size_t nodes = spec.node_count();
  const std::size_t uc = model.u_bounds().corner_count();
  const std::size_t dc = model.d_bounds().corner_count();
  const std::size_t width = std::size_t{1} << n;
  const std::size_t successors = uc * dc;
  std::vector<Vec> u_corners(uc), d_corners(dc);
  for (std::size_t a = 0; a < uc; ++a) u_corners[a] = model.u_bounds().corner(a);
  for (std::size_t b = 0; b < dc; ++b) d_corners[b] = model.d_bounds().corner(b);

  Vec l(nodes), g(nodes);
  parallel_for(nodes, opts.threads, [&](std::size_t begin, std::size_t end) {
    Vec s(n);
    for (std::size_t q = begin; q < end; ++q) {
      spec.node(q, s);
      l[q] = cost.l(s);
      g[q] = cost.g(s);
    }
  });

  const bool precompute =
      nodes * successors * width * (sizeof(std::uint32_t) + sizeof(double)) <= kStencilBudgetBytes;
  StencilTable table;
  if (precompute) {
    table.width = width;
    table.index.resize(nodes * successors * width);
    table.weight.resize(nodes * successors * width);
    parallel_for(nodes, opts.threads, [&](std::size_t begin, std::size_t end) {
      StepWorkspace ws(model);
      Vec s(n), next(n);
      for (std::size_t q = begin; q < end; ++q) {
        spec.node(q, s);
        for (std::size_t a = 0; a < uc; ++a) {
          for (std::size_t b = 0; b < dc; ++b) {
            integrate_step_into(model, s, u_corners[a], d_corners[b], time_grid.dt, time_grid.substeps,
                                next, ws);
            const std::size_t at = ((q * uc + a) * dc + b) * width;
            fill_stencil(spec, next, &table.index[at], &table.weight[at]);
          }
        }
      }
    });
  }

  ValueGrid vg;
  vg.spec = spec;
  vg.mode = cost.mode;
  vg.time_grid = time_grid;
  vg.model_name = std::string(model.name());
  Vec cur(nodes);
  for (std::size_t q = 0; q < nodes; ++q) {
    cur[q] = cost.mode == CostMode::ReachAvoid ? std::max(g[q], l[q]) : l[q];
  }
  if (opts.retain_all) vg.history.push_back(cur);

  Vec next_v(nodes);
  for (int k = 0; k < time_grid.num_steps; ++k) {
    std::mutex change_mutex;
    double max_change = 0.0;
    parallel_for(nodes, opts.threads, [&](std::size_t begin, std::size_t end) {
      StepWorkspace ws(model);
      Vec s(n), succ(n);
      std::array<std::uint32_t, std::size_t{1} << kOracleMaxDim> idx{};
      std::array<double, std::size_t{1} << kOracleMaxDim> w{};
      double local_change = 0.0;
      for (std::size_t q = begin; q < end; ++q) {
        if (!precompute) spec.node(q, s);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < uc; ++a) {
          double worst = -std::numeric_limits<double>::infinity();
          for (std::size_t b = 0; b < dc; ++b) {
            double v;
            if (precompute) {
              const std::size_t at = ((q * uc + a) * dc + b) * width;
              v = apply_stencil(cur, &table.index[at], &table.weight[at], width);
            } else {
              integrate_step_into(model, s, u_corners[a], d_corners[b], time_grid.dt,
                                  time_grid.substeps, succ, ws);
              fill_stencil(spec, succ, idx.data(), w.data());
              v = apply_stencil(cur, idx.data(), w.data(), width);
            }
            worst = std::max(worst, v);
          }
          best = std::min(best, worst);
        }
        const double nv = cost.mode == CostMode::ReachAvoid ? std::max(g[q], std::min(l[q], best))
                                                            : std::max(l[q], best);
        next_v[q] = nv;
        local_change = std::max(local_change, std::abs(nv - cur[q]));
      }
      std::lock_guard<std::mutex> lock(change_mutex);
      max_change = std::max(max_change, local_change);
    });
    std::swap(cur, next_v);
    vg.steps_run = k + 1;
    if (opts.retain_all) vg.history.push_back(cur);
    if (opts.early_stop_tolerance > 0.0 && max_change < opts.early_stop_tolerance) {
      vg.converged = true;
      break;
    }
  }
  if (!opts.retain_all) vg.history.push_back(std::move(cur));
  for (double v : vg.values()) {
    if (!std::isfinite(v)) throw NumericalBlowup("oracle: non-finite value on the grid", {});
  }
  return vg;
}

// --- disturbance rule -------------------------------------------------------------

AnalyticDisturbance grid_disturbance_rule(std::shared_ptr<const ValueGrid> vg, ModelPtr model) {
  if (!vg || !model) throw InvalidArgument("grid_disturbance_rule: null argument");
  if (vg->spec.dim() != model->state_dim()) {
    throw InvalidArgument("grid_disturbance_rule: grid dimension does not match the model");
  }
  if (!vg->model_name.empty() && vg->model_name != model->name()) {
    throw InvalidArgument("grid_disturbance_rule: grid was solved for model " + vg->model_name);
  }
  AnalyticDisturbance rule;
  rule.name = "grid_value";
  rule.rule = [vg, model](std::span<const double> s, int k, std::span<double> out) {
    const ControlAffineModel& m = *model;
    const std::size_t n = m.state_dim();
    const Vec& values = vg->retains_all() ? vg->values_at(k) : vg->values();
    // Scratch sizes depend only on the dimensions, so reuse across models is safe.
    thread_local std::unique_ptr<StepWorkspace> ws;
    if (!ws || ws->cur.size() != n || ws->rhs.control_cols.cols() != m.control_dim() ||
        ws->rhs.disturbance_cols.cols() != m.disturbance_dim()) {
      ws = std::make_unique<StepWorkspace>(m);
    }
    std::array<double, 64> next_buf{};
    std::span<double> next(next_buf.data(), n);
    const IntervalBounds& ub = m.u_bounds();
    const IntervalBounds& db = m.d_bounds();
    Vec u(ub.size()), d(db.size());
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_corner = 0;
    for (std::size_t b = 0; b < db.corner_count(); ++b) {
      for (std::size_t j = 0; j < d.size(); ++j) d[j] = (b >> j) & 1U ? db.hi[j] : db.lo[j];
      double inner = std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < ub.corner_count(); ++a) {
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = (a >> i) & 1U ? ub.hi[i] : ub.lo[i];
        integrate_step_into(m, s, u, d, vg->time_grid.dt, vg->time_grid.substeps, next, *ws);
        inner = std::min(inner, interp(vg->spec, values, next));
      }
      if (inner > best) {
        best = inner;
        best_corner = b;
      }
    }
    for (std::size_t j = 0; j < out.size(); ++j) {
      out[j] = (best_corner >> j) & 1U ? db.hi[j] : db.lo[j];
    }
  };
  return rule;
}

// --- export ---------------------------------------------------------------------

nlohmann::json value_grid_to_json(const ValueGrid& vg, bool include_history) {
  nlohmann::json j;
  j["format"] = "reachcls-value-grid";
  j["format_version"] = 1;
  j["model_name"] = vg.model_name;
  j["mode"] = to_string(vg.mode);
  j["grid"] = vg.spec.to_json();
  j["time_grid"] = {{"dt", vg.time_grid.dt},
                    {"num_steps", vg.time_grid.num_steps},
                    {"substeps", vg.time_grid.substeps}};
  j["steps_run"] = vg.steps_run;
  j["converged"] = vg.converged;
  j["node_count"] = vg.spec.node_count();
  j["values"] = vg.values();
  if (include_history && vg.retains_all() && vg.history.size() > 1) {
    j["history"] = nlohmann::json::array();
    for (std::size_t k = 0; k + 1 < vg.history.size(); ++k) j["history"].push_back(vg.history[k]);
  }
  return j;
}

ValueGrid value_grid_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "reachcls-value-grid") {
    throw ConfigError("format", "not a value-grid file");
  }
  ValueGrid vg;
  try {
    if (j.at("format_version").get<int>() != 1) throw ConfigError("format_version", "unsupported version");
    vg.model_name = j.at("model_name").get<std::string>();
    vg.mode = cost_mode_from_string(j.at("mode").get<std::string>());
    vg.spec = GridSpec::from_json(j.at("grid"), "grid");
    const auto& tg = j.at("time_grid");
    vg.time_grid.dt = tg.at("dt").get<double>();
    vg.time_grid.num_steps = tg.at("num_steps").get<int>();
    vg.time_grid.substeps = tg.at("substeps").get<int>();
    vg.steps_run = j.at("steps_run").get<int>();
    vg.converged = j.at("converged").get<bool>();
    if (j.contains("history")) {
      for (const auto& h : j.at("history")) vg.history.push_back(h.get<Vec>());
    }
    vg.history.push_back(j.at("values").get<Vec>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("", std::string("malformed value grid: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError("", std::string("malformed value grid: ") + e.what());
  }
  if (vg.history.size() != 1 && !vg.retains_all()) {
    throw ConfigError("history", "history length does not match steps_run");
  }
  for (std::size_t k = 0; k < vg.history.size(); ++k) {
    if (vg.history[k].size() != vg.spec.node_count()) {
      throw ConfigError(k + 1 == vg.history.size() ? "values" : "history/" + std::to_string(k),
                        "length does not match the grid node count");
    }
    for (double v : vg.history[k]) {
      if (!std::isfinite(v)) throw ConfigError("values", "non-finite value");
    }
  }
  return vg;
}

std::string value_grid_csv(const ValueGrid& vg) {
  std::ostringstream os;
  os.precision(17);
  os << "# reachcls value grid; model=" << vg.model_name << "; mode=" << to_string(vg.mode)
     << "; steps_run=" << vg.steps_run << "; converged=" << (vg.converged ? 1 : 0) << '\n';
  os << "# points=";
  for (std::size_t i = 0; i < vg.spec.dim(); ++i) os << (i ? "x" : "") << vg.spec.points[i];
  os << '\n';
  for (std::size_t i = 0; i < vg.spec.dim(); ++i) os << 'x' << i << ',';
  os << "value\n";
  const Vec& v = vg.values();
  Vec s(vg.spec.dim());
  for (std::size_t q = 0; q < v.size(); ++q) {
    vg.spec.node(q, s);
    for (double x : s) os << x << ',';
    os << v[q] << '\n';
  }
  return os.str();
}

void save_value_grid(const ValueGrid& vg, const std::filesystem::path& path, bool include_history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  if (path.extension() == ".csv") {
    out << value_grid_csv(vg);
  } else {
    out << value_grid_to_json(vg, include_history).dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ValueGrid load_value_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", path.string() + ": " + e.what());
  }
  return value_grid_from_json(j);
}

}  // namespace reachcls
