#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "reachcls/core.hpp"

namespace reachcls {

/// Affine map of each input dimension from [lo, hi] onto [-1, 1].
struct InputNormalizer {
  Vec lo;
  Vec hi;

  InputNormalizer() = default;
  explicit InputNormalizer(const IntervalBounds& box) : lo(box.lo), hi(box.hi) {}
  InputNormalizer(Vec lo_, Vec hi_);

  std::size_t size() const { return lo.size(); }
  double apply(std::size_t i, double x) const {
    const double w = hi[i] - lo[i];
    return w > 0.0 ? 2.0 * (x - lo[i]) / w - 1.0 : 0.0;
  }
  bool operator==(const InputNormalizer&) const = default;
};

/// Labelled states. `label_columns[c][i]` is the bit for sample i in column c
/// (one column per classified input dimension); 1 selects the max corner.
struct SampleBatch {
  std::size_t dim = 0;
  Vec states;  // row-major, size() * dim
  std::vector<Bits> label_columns;

  std::size_t size() const { return dim == 0 ? 0 : states.size() / dim; }
  std::span<const double> state(std::size_t i) const { return {states.data() + i * dim, dim}; }
};

/// input -> 20 ReLU -> 20 ReLU -> 2 softmax. Parameters are held in one flat
/// vector laid out as W1 (20 x n), b1, W2 (20 x 20), b2, W3 (2 x 20), b3.
class MlpClassifier {
 public:
  static constexpr std::size_t kHidden = 20;
  static constexpr std::size_t kMaxInput = 64;

  MlpClassifier() = default;
  /// Zero parameters.
  MlpClassifier(std::size_t input_dim, InputNormalizer normalizer);

  static std::size_t parameter_count_for(std::size_t input_dim) {
    return (kHidden * input_dim + kHidden) + (kHidden * kHidden + kHidden) + (2 * kHidden + 2);
  }

  std::size_t input_dim() const { return input_dim_; }
  std::size_t parameter_count() const { return params_.size(); }
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }
  const InputNormalizer& normalizer() const { return normalizer_; }

  std::array<double, 2> logits(std::span<const double> s) const;
  /// (p_min_corner, p_max_corner).
  std::array<double, 2> forward(std::span<const double> s) const;
  /// 1 iff p_max_corner >= 0.5; ties go to the max corner.
  bool classify(std::span<const double> s) const;

  /// Mean cross-entropy over the selected samples of `batch` (label column
  /// `column`). When `grad` is non-null it receives the gradient w.r.t. the
  /// flat parameter vector.
  double loss_and_gradient(const SampleBatch& batch, std::size_t column,
                           std::span<const std::size_t> indices, Vec* grad) const;

  /// Rounds every parameter to the nearest float32 value.
  void quantize_f32();
  bool is_f32_exact() const;

  bool operator==(const MlpClassifier&) const = default;

 private:
  std::size_t input_dim_ = 0;
  InputNormalizer normalizer_;
  Vec params_;
};

/// Weights and biases i.i.d. Uniform[-0.1, 0.1], rounded to float32 values.
MlpClassifier init_mlp(std::size_t input_dim, std::uint64_t seed, InputNormalizer normalizer);
MlpClassifier init_mlp(std::size_t input_dim, std::uint64_t seed);

struct TrainConfig {
  double learning_rate = 0.001;
  double decay = 0.95;
  int grad_steps = 2000;
  int batch_size = 512;
  std::uint64_t seed = 0;
  double holdout_fraction = 0.1;
  /// Held-out error is recorded every `trace_every` steps (0 disables).
  int trace_every = 100;
  double rms_epsilon = 1e-8;
  bool quantize_f32 = true;

  void validate() const;
};

struct TracePoint {
  int step = 0;
  double heldout_error = 0.0;
  double heldout_loss = 0.0;
};

struct TrainMetrics {
  double initial_error = 0.0;
  double final_error = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t train_size = 0;
  std::size_t holdout_size = 0;
  std::vector<TracePoint> loss_trace;
};

struct TrainResult {
  MlpClassifier classifier;
  TrainMetrics metrics;
};

/// RMSprop on mean cross-entropy over seeded mini-batches (drawn with
/// replacement from the 90% training split); metrics are measured on the
/// seeded 10% held-out split.
TrainResult train(MlpClassifier clf, const SampleBatch& batch, std::size_t column,
                  const TrainConfig& cfg);

/// Misclassification fraction of `clf` on the selected samples.
double classification_error(const MlpClassifier& clf, const SampleBatch& batch, std::size_t column,
                            std::span<const std::size_t> indices);

}  // namespace reachcls
