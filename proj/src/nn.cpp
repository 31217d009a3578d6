#include "reachcls/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "reachcls/rng.hpp"

namespace reachcls {
namespace {

constexpr std::size_t H = MlpClassifier::kHidden;

struct Offsets {
  std::size_t w1, b1, w2, b2, w3, b3;
  explicit Offsets(std::size_t n)
      : w1(0), b1(H * n), w2(b1 + H), b2(w2 + H * H), w3(b2 + H), b3(w3 + 2 * H) {}
};

// Activations kept for backprop.
struct Activations {
  std::array<double, MlpClassifier::kMaxInput> x{};
  std::array<double, H> z1{}, a1{}, z2{}, a2{};
  std::array<double, 2> z3{};
};

void run_forward(const InputNormalizer& norm, std::span<const double> p, std::size_t n,
                 std::span<const double> s, Activations& act) {
  const Offsets o(n);
  for (std::size_t i = 0; i < n; ++i) act.x[i] = norm.apply(i, s[i]);
  for (std::size_t j = 0; j < H; ++j) {
    const double* w = p.data() + o.w1 + j * n;
    double acc = p[o.b1 + j];
    for (std::size_t i = 0; i < n; ++i) acc += w[i] * act.x[i];
    act.z1[j] = acc;
    act.a1[j] = acc > 0.0 ? acc : 0.0;
  }
  for (std::size_t j = 0; j < H; ++j) {
    const double* w = p.data() + o.w2 + j * H;
    double acc = p[o.b2 + j];
    for (std::size_t i = 0; i < H; ++i) acc += w[i] * act.a1[i];
    act.z2[j] = acc;
    act.a2[j] = acc > 0.0 ? acc : 0.0;
  }
  for (std::size_t c = 0; c < 2; ++c) {
    const double* w = p.data() + o.w3 + c * H;
    double acc = p[o.b3 + c];
    for (std::size_t i = 0; i < H; ++i) acc += w[i] * act.a2[i];
    act.z3[c] = acc;
  }
}

std::array<double, 2> softmax(const std::array<double, 2>& z) {
  const double m = std::max(z[0], z[1]);
  const double e0 = std::exp(z[0] - m);
  const double e1 = std::exp(z[1] - m);
  const double sum = e0 + e1;
  return {e0 / sum, e1 / sum};
}

// -log softmax(z)[label], computed without overflow.
double cross_entropy(const std::array<double, 2>& z, int label) {
  const double m = std::max(z[0], z[1]);
  const double lse = m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m));
  return lse - z[label];
}

float to_f32_within_init_range(double v) {
  float f = static_cast<float>(v);
  constexpr float kLimit = 0.1f;  // slightly above 0.1 in binary
  if (f > 0.1) f = std::nextafter(kLimit, 0.0f);
  if (f < -0.1) f = std::nextafter(-kLimit, 0.0f);
  return f;
}

}  // namespace

InputNormalizer::InputNormalizer(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
  if (lo.size() != hi.size()) throw InvalidArgument("normalizer: lo/hi length mismatch");
}

MlpClassifier::MlpClassifier(std::size_t input_dim, InputNormalizer normalizer)
    : input_dim_(input_dim), normalizer_(std::move(normalizer)), params_(parameter_count_for(input_dim), 0.0) {
  if (input_dim == 0 || input_dim > kMaxInput) {
    throw InvalidArgument("mlp: input dimension must be in [1, " + std::to_string(kMaxInput) + "]");
  }
  if (normalizer_.size() != input_dim) throw InvalidArgument("mlp: normalizer dimension mismatch");
}

std::array<double, 2> MlpClassifier::logits(std::span<const double> s) const {
  if (s.size() != input_dim_) throw InvalidArgument("mlp: input dimension mismatch");
  Activations act;
  run_forward(normalizer_, params_, input_dim_, s, act);
  return act.z3;
}

std::array<double, 2> MlpClassifier::forward(std::span<const double> s) const {
  return softmax(logits(s));
}

bool MlpClassifier::classify(std::span<const double> s) const {
  // p_max >= 0.5 exactly when the max-corner logit is not below the other.
  const auto z = logits(s);
  return z[1] >= z[0];
}

double MlpClassifier::loss_and_gradient(const SampleBatch& batch, std::size_t column,
                                        std::span<const std::size_t> indices, Vec* grad) const {
  if (batch.dim != input_dim_) throw InvalidArgument("mlp: batch dimension mismatch");
  if (column >= batch.label_columns.size()) throw InvalidArgument("mlp: label column out of range");
  if (indices.empty()) throw InvalidArgument("mlp: empty index set");
  const std::size_t n = input_dim_;
  const Offsets o(n);
  const Bits& labels = batch.label_columns[column];
  if (grad) grad->assign(params_.size(), 0.0);
  double total = 0.0;
  Activations act;
  std::array<double, H> d2{}, d1{};
  for (std::size_t idx : indices) {
    run_forward(normalizer_, params_, n, batch.state(idx), act);
    const int y = labels[idx] ? 1 : 0;
    total += cross_entropy(act.z3, y);
    if (!grad) continue;
    double* g = grad->data();
    const auto p = softmax(act.z3);
    const double d3[2] = {p[0] - (y == 0 ? 1.0 : 0.0), p[1] - (y == 1 ? 1.0 : 0.0)};
    for (std::size_t c = 0; c < 2; ++c) {
      g[o.b3 + c] += d3[c];
      double* gw = g + o.w3 + c * H;
      for (std::size_t i = 0; i < H; ++i) gw[i] += d3[c] * act.a2[i];
    }
    for (std::size_t i = 0; i < H; ++i) {
      const double back = params_[o.w3 + i] * d3[0] + params_[o.w3 + H + i] * d3[1];
      d2[i] = act.z2[i] > 0.0 ? back : 0.0;
    }
    for (std::size_t j = 0; j < H; ++j) {
      g[o.b2 + j] += d2[j];
      double* gw = g + o.w2 + j * H;
      for (std::size_t i = 0; i < H; ++i) gw[i] += d2[j] * act.a1[i];
    }
    d1.fill(0.0);
    for (std::size_t j = 0; j < H; ++j) {
      const double dj = d2[j];
      if (dj == 0.0) continue;
      const double* w = params_.data() + o.w2 + j * H;
      for (std::size_t i = 0; i < H; ++i) d1[i] += w[i] * dj;
    }
    for (std::size_t j = 0; j < H; ++j) {
      const double dj = act.z1[j] > 0.0 ? d1[j] : 0.0;
      g[o.b1 + j] += dj;
      double* gw = g + o.w1 + j * n;
      for (std::size_t i = 0; i < n; ++i) gw[i] += dj * act.x[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  if (grad) {
    for (double& v : *grad) v *= inv;
  }
  return total * inv;
}

void MlpClassifier::quantize_f32() {
  for (double& v : params_) v = static_cast<double>(static_cast<float>(v));
}

bool MlpClassifier::is_f32_exact() const {
  return std::all_of(params_.begin(), params_.end(), [](double v) {
    return static_cast<double>(static_cast<float>(v)) == v;
  });
}

MlpClassifier init_mlp(std::size_t input_dim, std::uint64_t seed, InputNormalizer normalizer) {
  MlpClassifier clf(input_dim, std::move(normalizer));
  Rng rng(seed);
  for (double& v : clf.parameters()) v = to_f32_within_init_range(rng.uniform(-0.1, 0.1));
  return clf;
}

MlpClassifier init_mlp(std::size_t input_dim, std::uint64_t seed) {
  return init_mlp(input_dim, seed, InputNormalizer(Vec(input_dim, -1.0), Vec(input_dim, 1.0)));
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("train: learning_rate must be > 0");
  if (!(decay > 0.0 && decay < 1.0)) throw InvalidArgument("train: decay must be in (0, 1)");
  if (batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
  if (grad_steps < 0) throw InvalidArgument("train: grad_steps must be >= 0");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw InvalidArgument("train: holdout_fraction must be in [0, 1)");
  }
}

double classification_error(const MlpClassifier& clf, const SampleBatch& batch, std::size_t column,
                            std::span<const std::size_t> indices) {
  if (indices.empty()) return 0.0;
  const Bits& labels = batch.label_columns.at(column);
  std::size_t wrong = 0;
  for (std::size_t idx : indices) {
    if (clf.classify(batch.state(idx)) != (labels[idx] != 0)) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(indices.size());
}

TrainResult train(MlpClassifier clf, const SampleBatch& batch, std::size_t column,
                  const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = batch.size();
  if (n == 0) throw InvalidArgument("train: empty batch");
  if (column >= batch.label_columns.size() || batch.label_columns[column].size() != n) {
    throw InvalidArgument("train: label column missing or of wrong length");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(derive_seed(cfg.seed, "split"));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);

  std::size_t holdout = 0;
  if (n >= 2 && cfg.holdout_fraction > 0.0) {
    holdout = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(cfg.holdout_fraction * static_cast<double>(n))), 1,
        n - 1);
  }
  std::vector<std::size_t> heldout(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout));
  std::vector<std::size_t> training(order.begin() + static_cast<std::ptrdiff_t>(holdout), order.end());
  // With a single sample there is nothing to hold out; measure on the sample itself.
  if (heldout.empty()) heldout = training;

  TrainResult result{std::move(clf), {}};
  MlpClassifier& net = result.classifier;
  TrainMetrics& m = result.metrics;
  m.train_size = training.size();
  m.holdout_size = holdout;
  m.initial_error = classification_error(net, batch, column, heldout);
  m.initial_loss = net.loss_and_gradient(batch, column, heldout, nullptr);
  if (cfg.trace_every > 0) m.loss_trace.push_back({0, m.initial_error, m.initial_loss});

  Rng batch_rng(derive_seed(cfg.seed, "batch"));
  Vec grad;
  Vec sq(net.parameter_count(), 0.0);
  std::vector<std::size_t> mini(static_cast<std::size_t>(cfg.batch_size));
  for (int step = 1; step <= cfg.grad_steps; ++step) {
    for (auto& idx : mini) idx = training[batch_rng.below(training.size())];
    net.loss_and_gradient(batch, column, mini, &grad);
    auto params = net.parameters();
    for (std::size_t p = 0; p < params.size(); ++p) {
      sq[p] = cfg.decay * sq[p] + (1.0 - cfg.decay) * grad[p] * grad[p];
      params[p] -= cfg.learning_rate * grad[p] / (std::sqrt(sq[p]) + cfg.rms_epsilon);
    }
    if (cfg.trace_every > 0 && (step % cfg.trace_every == 0 || step == cfg.grad_steps)) {
      m.loss_trace.push_back({step, classification_error(net, batch, column, heldout),
                              net.loss_and_gradient(batch, column, heldout, nullptr)});
    }
  }
  if (cfg.quantize_f32) net.quantize_f32();
  m.final_error = classification_error(net, batch, column, heldout);
  m.final_loss = net.loss_and_gradient(batch, column, heldout, nullptr);
  return result;
}

}  // namespace reachcls
