#include "reachcls/cost.hpp"

#include <algorithm>
#include <cmath>

#include "reachcls/sim.hpp"

namespace reachcls {
namespace {

void check_same_length(const Vec& a, const Vec& b, const char* what) {
  if (a.size() != b.size()) throw InvalidArgument(std::string(what) + ": length mismatch");
  if (a.empty()) throw InvalidArgument(std::string(what) + ": empty");
}

void check_projection(const std::vector<std::size_t>& projection, std::size_t dim) {
  if (!projection.empty() && projection.size() != dim) {
    throw InvalidArgument("surface projection length does not match surface dimension");
  }
}

// Signed distance to the axis-aligned box with the given center/half widths,
// where q_i = |x_i - c_i| - h_i.
template <typename Q>
double box_distance(std::size_t dim, Q&& q_of) {
  double outside = 0.0;
  double inside = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < dim; ++i) {
    const double q = q_of(i);
    if (q > 0.0) outside += q * q;
    inside = std::max(inside, q);
  }
  return outside > 0.0 ? std::sqrt(outside) : inside;
}

}  // namespace

ImplicitSurface ImplicitSurface::box(Vec center, Vec half_widths, std::vector<std::size_t> projection) {
  check_same_length(center, half_widths, "box");
  for (double h : half_widths) {
    if (!(h >= 0.0)) throw InvalidArgument("box: half widths must be non-negative");
  }
  check_projection(projection, center.size());
  ImplicitSurface s;
  s.kind_ = Kind::Box;
  s.a_ = std::move(center);
  s.b_ = std::move(half_widths);
  s.projection_ = std::move(projection);
  return s;
}

ImplicitSurface ImplicitSurface::sphere(Vec center, double radius, std::vector<std::size_t> projection) {
  if (center.empty()) throw InvalidArgument("sphere: empty center");
  if (!(radius >= 0.0)) throw InvalidArgument("sphere: radius must be non-negative");
  check_projection(projection, center.size());
  ImplicitSurface s;
  s.kind_ = Kind::Sphere;
  s.a_ = std::move(center);
  s.scalar_ = radius;
  s.projection_ = std::move(projection);
  return s;
}

ImplicitSurface ImplicitSurface::bounds_complement(Vec lo, Vec hi, std::vector<std::size_t> projection) {
  check_same_length(lo, hi, "bounds_complement");
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!(lo[i] <= hi[i])) throw InvalidArgument("bounds_complement: lo > hi");
  }
  check_projection(projection, lo.size());
  ImplicitSurface s;
  s.kind_ = Kind::BoundsComplement;
  s.a_ = std::move(lo);
  s.b_ = std::move(hi);
  s.projection_ = std::move(projection);
  return s;
}

ImplicitSurface ImplicitSurface::half_space(Vec normal, double offset, std::vector<std::size_t> projection) {
  if (normal.empty()) throw InvalidArgument("half_space: empty normal");
  double norm = 0.0;
  for (double v : normal) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) throw InvalidArgument("half_space: zero normal");
  check_projection(projection, normal.size());
  ImplicitSurface s;
  s.kind_ = Kind::HalfSpace;
  for (double& v : normal) v /= norm;
  s.a_ = std::move(normal);
  s.scalar_ = offset / norm;
  s.projection_ = std::move(projection);
  return s;
}

ImplicitSurface ImplicitSurface::union_of(std::vector<ImplicitSurface> members) {
  if (members.empty()) throw InvalidArgument("union: no members");
  ImplicitSurface s;
  s.kind_ = Kind::Union;
  s.members_ = std::move(members);
  return s;
}

ImplicitSurface ImplicitSurface::intersection_of(std::vector<ImplicitSurface> members) {
  if (members.empty()) throw InvalidArgument("intersection: no members");
  ImplicitSurface s;
  s.kind_ = Kind::Intersection;
  s.members_ = std::move(members);
  return s;
}

double ImplicitSurface::read(std::span<const double> s, std::size_t i) const {
  return projection_.empty() ? s[i] : s[projection_[i]];
}

std::size_t ImplicitSurface::required_dim() const {
  switch (kind_) {
    case Kind::Union:
    case Kind::Intersection: {
      std::size_t d = 0;
      for (const auto& m : members_) d = std::max(d, m.required_dim());
      return d;
    }
    default:
      if (projection_.empty()) return a_.size();
      return *std::max_element(projection_.begin(), projection_.end()) + 1;
  }
}

double ImplicitSurface::eval(std::span<const double> s) const {
  switch (kind_) {
    case Kind::Box:
      return box_distance(a_.size(),
                          [&](std::size_t i) { return std::fabs(read(s, i) - a_[i]) - b_[i]; });
    case Kind::BoundsComplement:
      return -box_distance(a_.size(), [&](std::size_t i) {
        const double c = 0.5 * (a_[i] + b_[i]);
        const double h = 0.5 * (b_[i] - a_[i]);
        return std::fabs(read(s, i) - c) - h;
      });
    case Kind::Sphere: {
      double acc = 0.0;
      for (std::size_t i = 0; i < a_.size(); ++i) {
        const double d = read(s, i) - a_[i];
        acc += d * d;
      }
      return std::sqrt(acc) - scalar_;
    }
    case Kind::HalfSpace: {
      double acc = 0.0;
      for (std::size_t i = 0; i < a_.size(); ++i) acc += a_[i] * read(s, i);
      return acc - scalar_;
    }
    case Kind::Union: {
      double v = std::numeric_limits<double>::infinity();
      for (const auto& m : members_) v = std::min(v, m.eval(s));
      return v;
    }
    case Kind::Intersection: {
      double v = -std::numeric_limits<double>::infinity();
      for (const auto& m : members_) v = std::max(v, m.eval(s));
      return v;
    }
  }
  return 0.0;
}

nlohmann::json ImplicitSurface::to_json() const {
  nlohmann::json j;
  auto put_projection = [&] {
    if (!projection_.empty()) j["projection"] = projection_;
  };
  switch (kind_) {
    case Kind::Box:
      j["type"] = "box";
      j["center"] = a_;
      j["half_widths"] = b_;
      put_projection();
      break;
    case Kind::Sphere:
      j["type"] = "sphere";
      j["center"] = a_;
      j["radius"] = scalar_;
      put_projection();
      break;
    case Kind::BoundsComplement:
      j["type"] = "bounds_complement";
      j["lo"] = a_;
      j["hi"] = b_;
      put_projection();
      break;
    case Kind::HalfSpace:
      j["type"] = "half_space";
      j["normal"] = a_;
      j["offset"] = scalar_;
      put_projection();
      break;
    case Kind::Union:
    case Kind::Intersection: {
      j["type"] = kind_ == Kind::Union ? "union" : "intersection";
      j["members"] = nlohmann::json::array();
      for (const auto& m : members_) j["members"].push_back(m.to_json());
      break;
    }
  }
  return j;
}

namespace {

const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) throw ConfigError(path, std::string("missing required field '") + key + "'");
  return j.at(key);
}

Vec read_vec(const nlohmann::json& j, const char* key, const std::string& path) {
  const auto& v = require(j, key, path);
  if (!v.is_array()) throw ConfigError(path + "." + key, "expected array of numbers");
  Vec out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) {
      throw ConfigError(path + "." + key + "[" + std::to_string(i) + "]", "expected number");
    }
    out.push_back(v[i].get<double>());
  }
  return out;
}

double read_number(const nlohmann::json& j, const char* key, const std::string& path) {
  const auto& v = require(j, key, path);
  if (!v.is_number()) throw ConfigError(path + "." + key, "expected number");
  return v.get<double>();
}

}  // namespace

ImplicitSurface ImplicitSurface::from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected object");
  const auto& type_field = require(j, "type", path);
  if (!type_field.is_string()) throw ConfigError(path + ".type", "expected string");
  const std::string type = type_field.get<std::string>();
  std::vector<std::size_t> projection;
  if (j.contains("projection")) {
    const auto& p = j.at("projection");
    if (!p.is_array()) throw ConfigError(path + ".projection", "expected array of indices");
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!p[i].is_number_integer() || p[i].get<std::int64_t>() < 0) {
        throw ConfigError(path + ".projection[" + std::to_string(i) + "]",
                          "expected non-negative integer");
      }
      projection.push_back(p[i].get<std::size_t>());
    }
  }
  try {
    if (type == "box") {
      return box(read_vec(j, "center", path), read_vec(j, "half_widths", path), projection);
    }
    if (type == "sphere") {
      return sphere(read_vec(j, "center", path), read_number(j, "radius", path), projection);
    }
    if (type == "bounds_complement") {
      return bounds_complement(read_vec(j, "lo", path), read_vec(j, "hi", path), projection);
    }
    if (type == "half_space") {
      return half_space(read_vec(j, "normal", path), read_number(j, "offset", path), projection);
    }
    if (type == "union" || type == "intersection") {
      const auto& m = require(j, "members", path);
      if (!m.is_array() || m.empty()) {
        throw ConfigError(path + ".members", "expected non-empty array");
      }
      std::vector<ImplicitSurface> members;
      for (std::size_t i = 0; i < m.size(); ++i) {
        members.push_back(from_json(m[i], path + ".members[" + std::to_string(i) + "]"));
      }
      return type == "union" ? union_of(std::move(members)) : intersection_of(std::move(members));
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
  throw ConfigError(path + ".type", "unknown surface type '" + type + "'");
}

std::string to_string(CostMode mode) {
  return mode == CostMode::ReachAvoid ? "reach_avoid" : "max_tracking";
}

CostMode cost_mode_from_string(const std::string& s) {
  if (s == "reach_avoid") return CostMode::ReachAvoid;
  if (s == "max_tracking") return CostMode::MaxTracking;
  throw InvalidArgument("unknown cost mode '" + s + "'");
}

CostSpec::CostSpec(ImplicitSurface target_, std::optional<ImplicitSurface> constraint_,
                   CostMode mode_)
    : target(std::move(target_)), constraint(std::move(constraint_)), mode(mode_) {
  if (mode == CostMode::MaxTracking && constraint) {
    throw InvalidArgument("max_tracking cost takes no constraint surface");
  }
}

nlohmann::json CostSpec::to_json() const {
  nlohmann::json j;
  j["mode"] = to_string(mode);
  j["target"] = target.to_json();
  if (constraint) j["constraint"] = constraint->to_json();
  return j;
}

CostSpec CostSpec::from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected object");
  CostMode mode = CostMode::ReachAvoid;
  if (j.contains("mode")) {
    try {
      mode = cost_mode_from_string(j.at("mode").get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(path + ".mode", e.what());
    }
  }
  if (!j.contains("target")) throw ConfigError(path, "missing required field 'target'");
  auto target = ImplicitSurface::from_json(j.at("target"), path + ".target");
  std::optional<ImplicitSurface> constraint;
  if (j.contains("constraint") && !j.at("constraint").is_null()) {
    if (mode == CostMode::MaxTracking) {
      throw ConfigError(path + ".constraint", "max_tracking cost takes no constraint surface");
    }
    constraint = ImplicitSurface::from_json(j.at("constraint"), path + ".constraint");
  }
  return CostSpec(std::move(target), std::move(constraint), mode);
}

double reach_avoid_cost(const Trajectory& traj, const ImplicitSurface& target,
                        const std::optional<ImplicitSurface>& constraint) {
  if (traj.states.empty()) throw InvalidArgument("reach_avoid_cost: empty trajectory");
  CostAccumulator acc(CostMode::ReachAvoid);
  for (const auto& s : traj.states) {
    acc.push(target.eval(s),
             constraint ? constraint->eval(s) : -std::numeric_limits<double>::infinity());
  }
  return acc.value();
}

double max_tracking_cost(const Trajectory& traj, const ImplicitSurface& target) {
  if (traj.states.empty()) throw InvalidArgument("max_tracking_cost: empty trajectory");
  CostAccumulator acc(CostMode::MaxTracking);
  for (const auto& s : traj.states) acc.push(target.eval(s), 0.0);
  return acc.value();
}

double trajectory_cost(const Trajectory& traj, const CostSpec& cost) {
  return cost.mode == CostMode::ReachAvoid ? reach_avoid_cost(traj, cost.target, cost.constraint)
                                           : max_tracking_cost(traj, cost.target);
}

}  // namespace reachcls
