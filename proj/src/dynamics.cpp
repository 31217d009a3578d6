#include "reachcls/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace reachcls {

IntervalBounds::IntervalBounds(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size()) {
    throw InvalidArgument("interval bounds: lo and hi differ in length");
  }
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!(lo[i] <= hi[i])) {
      throw InvalidArgument("interval bounds: lo > hi in dimension " + std::to_string(i));
    }
  }
}

IntervalBounds IntervalBounds::symmetric(std::size_t n, double half_width) {
  return IntervalBounds(Vec(n, -half_width), Vec(n, half_width));
}

bool IntervalBounds::contains(std::span<const double> x) const {
  if (x.size() != lo.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double slack = 1e-12 * std::max(1.0, std::max(std::fabs(lo[i]), std::fabs(hi[i])));
    if (!(x[i] >= lo[i] - slack && x[i] <= hi[i] + slack)) return false;
  }
  return true;
}

Vec IntervalBounds::corner(std::span<const std::uint8_t> bits) const {
  if (bits.size() != size()) throw InvalidArgument("corner: bit count mismatch");
  Vec out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = bits[i] ? hi[i] : lo[i];
  return out;
}

Vec IntervalBounds::corner(std::size_t index) const {
  Vec out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = ((index >> i) & 1u) ? hi[i] : lo[i];
  return out;
}

std::string format_vec(std::span<const double> v) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ", ";
    os << v[i];
  }
  os << ')';
  return os.str();
}

ControlAffineModel::ControlAffineModel(IntervalBounds u_bounds, IntervalBounds d_bounds,
                                       IntervalBounds state_box,
                                       std::vector<std::size_t> angle_dims)
    : u_bounds_(std::move(u_bounds)),
      d_bounds_(std::move(d_bounds)),
      state_box_(std::move(state_box)),
      angle_dims_(std::move(angle_dims)) {
  for (auto i : angle_dims_) {
    if (i >= state_box_.size()) throw InvalidArgument("angle dimension out of range");
  }
}

Matrix ControlAffineModel::control_matrix(std::span<const double> s) const {
  Matrix m(state_dim(), control_dim());
  control_columns(s, m);
  return m;
}

Matrix ControlAffineModel::disturbance_matrix(std::span<const double> s) const {
  Matrix m(state_dim(), disturbance_dim());
  disturbance_columns(s, m);
  return m;
}

void check_inputs(const ControlAffineModel& model, std::span<const double> s,
                  std::span<const double> u, std::span<const double> d) {
  if (s.size() != model.state_dim()) {
    throw InvalidArgument("state has dimension " + std::to_string(s.size()) + ", model " +
                          std::string(model.name()) + " expects " +
                          std::to_string(model.state_dim()));
  }
  if (u.size() != model.control_dim()) {
    throw InvalidArgument("control has dimension " + std::to_string(u.size()) + ", expected " +
                          std::to_string(model.control_dim()));
  }
  if (d.size() != model.disturbance_dim()) {
    throw InvalidArgument("disturbance has dimension " + std::to_string(d.size()) +
                          ", expected " + std::to_string(model.disturbance_dim()));
  }
  if (!model.u_bounds().contains(u)) {
    throw InvalidArgument("control " + format_vec(u) + " outside bounds");
  }
  if (!model.d_bounds().contains(d)) {
    throw InvalidArgument("disturbance " + format_vec(d) + " outside bounds");
  }
}

void eval_rhs_into(const ControlAffineModel& model, std::span<const double> s,
                   std::span<const double> u, std::span<const double> d, std::span<double> out,
                   RhsWorkspace& ws) {
  const std::size_t n = model.state_dim();
  model.drift(s, out);
  if (!u.empty()) {
    model.control_columns(s, ws.control_cols);
    for (std::size_t r = 0; r < n; ++r) {
      double acc = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) acc += ws.control_cols(r, i) * u[i];
      out[r] += acc;
    }
  }
  if (!d.empty()) {
    model.disturbance_columns(s, ws.disturbance_cols);
    for (std::size_t r = 0; r < n; ++r) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d.size(); ++j) acc += ws.disturbance_cols(r, j) * d[j];
      out[r] += acc;
    }
  }
}

StateVec eval_rhs(const ControlAffineModel& model, std::span<const double> s,
                  std::span<const double> u, std::span<const double> d) {
  check_inputs(model, s, u, d);
  RhsWorkspace ws(model);
  StateVec out(model.state_dim());
  eval_rhs_into(model, s, u, d, out, ws);
  return out;
}

namespace {

constexpr double kPi = std::numbers::pi;

class Point2d final : public ControlAffineModel {
 public:
  Point2d(IntervalBounds u, IntervalBounds box) : ControlAffineModel(std::move(u), {}, std::move(box)) {}
  std::string_view name() const override { return "point2d"; }
  void drift(std::span<const double>, std::span<double> out) const override {
    out[0] = 0.0;
    out[1] = 0.0;
  }
  void control_columns(std::span<const double>, Matrix& out) const override {
    out(0, 0) = 1.0;
    out(0, 1) = 0.0;
    out(1, 0) = 0.0;
    out(1, 1) = 1.0;
  }
  void disturbance_columns(std::span<const double>, Matrix&) const override {}
};

class Unicycle4d final : public ControlAffineModel {
 public:
  Unicycle4d(IntervalBounds u, IntervalBounds box)
      : ControlAffineModel(std::move(u), {}, std::move(box), {2}) {}
  std::string_view name() const override { return "unicycle4d"; }
  void drift(std::span<const double> s, std::span<double> out) const override {
    out[0] = s[3] * std::cos(s[2]);
    out[1] = s[3] * std::sin(s[2]);
    out[2] = 0.0;
    out[3] = 0.0;
  }
  // u = (u_omega, u_a)
  void control_columns(std::span<const double>, Matrix& out) const override {
    out.fill(0.0);
    out(2, 0) = 1.0;
    out(3, 1) = 1.0;
  }
  void disturbance_columns(std::span<const double>, Matrix&) const override {}
};

IntervalBounds quad_control_bounds(const QuadParams& p, bool with_yaw) {
  Vec lo{-p.angle_bound, -p.angle_bound, p.gravity - p.thrust_bound};
  Vec hi{p.angle_bound, p.angle_bound, p.gravity + p.thrust_bound};
  if (with_yaw) {
    lo.push_back(-p.yaw_rate_bound);
    hi.push_back(p.yaw_rate_bound);
  }
  return {lo, hi};
}

IntervalBounds quad_disturbance_bounds(const QuadParams& p) {
  const double w = p.disturbance_bound;
  const double b = p.planner_bound;
  return {{-w, -w, -w, -b, -b, -b}, {w, w, w, b, b, b}};
}

IntervalBounds quad_state_box(const QuadParams& p, bool with_yaw) {
  Vec lo(6), hi(6);
  for (int i = 0; i < 3; ++i) {
    lo[i] = -p.position_box;
    hi[i] = p.position_box;
    lo[i + 3] = -p.velocity_box;
    hi[i + 3] = p.velocity_box;
  }
  if (with_yaw) {
    lo.push_back(-kPi);
    hi.push_back(kPi);
  }
  return {lo, hi};
}

// Relative position rows shared by the 6D and 7D models:
//   dr/dt = s_v - d_v - b.
void relative_position_columns(Matrix& out) {
  out.fill(0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    out(i, i) = -1.0;
    out(i, i + 3) = -1.0;
  }
}

class Quad6dRelative final : public ControlAffineModel {
 public:
  explicit Quad6dRelative(const QuadParams& p)
      : ControlAffineModel(quad_control_bounds(p, false), quad_disturbance_bounds(p),
                           quad_state_box(p, false)),
        g_(p.gravity) {}
  std::string_view name() const override { return "quad6d_rel"; }
  void drift(std::span<const double> s, std::span<double> out) const override {
    out[0] = s[3];
    out[1] = s[4];
    out[2] = s[5];
    out[3] = 0.0;
    out[4] = 0.0;
    out[5] = -g_;
  }
  // u = (theta, phi, T)
  void control_columns(std::span<const double>, Matrix& out) const override {
    out.fill(0.0);
    out(3, 0) = g_;
    out(4, 1) = -g_;
    out(5, 2) = 1.0;
  }
  void disturbance_columns(std::span<const double>, Matrix& out) const override {
    relative_position_columns(out);
  }

 private:
  double g_;
};

class Quad7dRelative final : public ControlAffineModel {
 public:
  explicit Quad7dRelative(const QuadParams& p)
      : ControlAffineModel(quad_control_bounds(p, true), quad_disturbance_bounds(p),
                           quad_state_box(p, true), {6}),
        g_(p.gravity) {}
  std::string_view name() const override { return "quad7d_rel"; }
  void drift(std::span<const double> s, std::span<double> out) const override {
    out[0] = s[3];
    out[1] = s[4];
    out[2] = s[5];
    out[3] = 0.0;
    out[4] = 0.0;
    out[5] = -g_;
    out[6] = 0.0;
  }
  // u = (theta, phi, T, psi_dot); sin -> identity, cos(phi)cos(theta) -> 1.
  void control_columns(std::span<const double> s, Matrix& out) const override {
    const double c = std::cos(s[6]);
    const double sn = std::sin(s[6]);
    out.fill(0.0);
    out(3, 0) = g_ * c;
    out(3, 1) = g_ * sn;
    out(4, 0) = g_ * sn;
    out(4, 1) = -g_ * c;
    out(5, 2) = 1.0;
    out(6, 3) = 1.0;
  }
  void disturbance_columns(std::span<const double>, Matrix& out) const override {
    relative_position_columns(out);
  }

 private:
  double g_;
};

class QuadRelX final : public ControlAffineModel {
 public:
  explicit QuadRelX(const QuadParams& p)
      : ControlAffineModel({{-p.angle_bound}, {p.angle_bound}},
                           {{-p.disturbance_bound, -p.planner_bound},
                            {p.disturbance_bound, p.planner_bound}},
                           {{-p.position_box, -p.velocity_box}, {p.position_box, p.velocity_box}}),
        g_(p.gravity) {}
  std::string_view name() const override { return "quad_rel_x"; }
  void drift(std::span<const double> s, std::span<double> out) const override {
    out[0] = s[1];
    out[1] = 0.0;
  }
  void control_columns(std::span<const double>, Matrix& out) const override {
    out(0, 0) = 0.0;
    out(1, 0) = g_;
  }
  void disturbance_columns(std::span<const double>, Matrix& out) const override {
    out(0, 0) = -1.0;
    out(0, 1) = -1.0;
    out(1, 0) = 0.0;
    out(1, 1) = 0.0;
  }

 private:
  double g_;
};

class LinearModel final : public ControlAffineModel {
 public:
  LinearModel(Matrix a, Vec offset, Matrix b, Matrix g, IntervalBounds u, IntervalBounds d,
              IntervalBounds box)
      : ControlAffineModel(std::move(u), std::move(d), std::move(box)),
        a_(std::move(a)),
        offset_(std::move(offset)),
        b_(std::move(b)),
        g_(std::move(g)) {
    const std::size_t n = state_dim();
    if (a_.rows() != n || a_.cols() != n || offset_.size() != n || b_.rows() != n ||
        b_.cols() != control_dim() || g_.rows() != n || g_.cols() != disturbance_dim()) {
      throw InvalidArgument("linear model: inconsistent matrix shapes");
    }
  }
  std::string_view name() const override { return "linear"; }
  void drift(std::span<const double> s, std::span<double> out) const override {
    for (std::size_t r = 0; r < state_dim(); ++r) {
      double acc = offset_[r];
      for (std::size_t c = 0; c < state_dim(); ++c) acc += a_(r, c) * s[c];
      out[r] = acc;
    }
  }
  void control_columns(std::span<const double>, Matrix& out) const override { out = b_; }
  void disturbance_columns(std::span<const double>, Matrix& out) const override { out = g_; }

 private:
  Matrix a_;
  Vec offset_;
  Matrix b_;
  Matrix g_;
};

class OverriddenModel final : public ControlAffineModel {
 public:
  OverriddenModel(ModelPtr base, IntervalBounds u, IntervalBounds d, IntervalBounds box)
      : ControlAffineModel(std::move(u), std::move(d), std::move(box), base->angle_dims()),
        base_(std::move(base)) {}
  std::string_view name() const override { return base_->name(); }
  void drift(std::span<const double> s, std::span<double> out) const override {
    base_->drift(s, out);
  }
  void control_columns(std::span<const double> s, Matrix& out) const override {
    base_->control_columns(s, out);
  }
  void disturbance_columns(std::span<const double> s, Matrix& out) const override {
    base_->disturbance_columns(s, out);
  }

 private:
  ModelPtr base_;
};

}  // namespace

ModelPtr make_point2d(const IntervalBounds& u_bounds) {
  return make_point2d(u_bounds, IntervalBounds::symmetric(2, 3.0));
}

ModelPtr make_point2d(const IntervalBounds& u_bounds, const IntervalBounds& state_box) {
  if (u_bounds.size() != 2) throw InvalidArgument("point2d: control bounds must have length 2");
  if (state_box.size() != 2) throw InvalidArgument("point2d: state box must have length 2");
  return std::make_shared<Point2d>(u_bounds, state_box);
}

ModelPtr make_unicycle4d() {
  return make_unicycle4d({{-1.0, 0.0}, {1.0, 1.0}}, {{-3.0, -3.0, -kPi, 0.0}, {3.0, 3.0, kPi, 2.0}});
}

ModelPtr make_unicycle4d(const IntervalBounds& u_bounds, const IntervalBounds& state_box) {
  if (u_bounds.size() != 2) throw InvalidArgument("unicycle4d: control bounds must have length 2");
  if (state_box.size() != 4) throw InvalidArgument("unicycle4d: state box must have length 4");
  return std::make_shared<Unicycle4d>(u_bounds, state_box);
}

ModelPtr make_quad6d_relative(const QuadParams& params) {
  return std::make_shared<Quad6dRelative>(params);
}

ModelPtr make_quad7d_relative(const QuadParams& params) {
  return std::make_shared<Quad7dRelative>(params);
}

ModelPtr make_quad_rel_x(const QuadParams& params) { return std::make_shared<QuadRelX>(params); }

ModelPtr make_linear_model(Matrix a_matrix, Vec offset, Matrix b_matrix, Matrix g_matrix,
                           IntervalBounds u_bounds, IntervalBounds d_bounds,
                           IntervalBounds state_box) {
  return std::make_shared<LinearModel>(std::move(a_matrix), std::move(offset),
                                       std::move(b_matrix), std::move(g_matrix),
                                       std::move(u_bounds), std::move(d_bounds),
                                       std::move(state_box));
}

ModelPtr with_overrides(const ModelPtr& model, const IntervalBounds& u_bounds,
                        const IntervalBounds& d_bounds, const IntervalBounds& state_box) {
  auto pick = [](const IntervalBounds& over, const IntervalBounds& own, const char* what) {
    if (over.empty()) return own;
    if (over.size() != own.size()) {
      throw InvalidArgument(std::string("override for ") + what + " has length " +
                            std::to_string(over.size()) + ", expected " +
                            std::to_string(own.size()));
    }
    return over;
  };
  return std::make_shared<OverriddenModel>(model, pick(u_bounds, model->u_bounds(), "u bounds"),
                                           pick(d_bounds, model->d_bounds(), "d bounds"),
                                           pick(state_box, model->state_box(), "state box"));
}

}  // namespace reachcls
