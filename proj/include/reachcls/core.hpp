#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace reachcls {

using Vec = std::vector<double>;
using StateVec = Vec;
using ControlVec = Vec;
using DisturbVec = Vec;
using Bits = std::vector<std::uint8_t>;

/// Wrong dimensions, out-of-bounds inputs, malformed arguments.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A non-finite state appeared during integration.
class NumericalBlowup : public std::runtime_error {
 public:
  NumericalBlowup(const std::string& what, Vec state)
      : std::runtime_error(what), state_(std::move(state)) {}
  const Vec& state() const { return state_; }

 private:
  Vec state_;
};

/// Configuration or file-schema violation. `field` is a JSON-pointer-like path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::runtime_error(field.empty() ? what : field + ": " + what),
        field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix, sized once and reused as scratch.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  std::span<const double> data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec data_;
};

/// Per-dimension closed intervals [lo[i], hi[i]].
struct IntervalBounds {
  Vec lo;
  Vec hi;

  IntervalBounds() = default;
  IntervalBounds(Vec lo_, Vec hi_);

  static IntervalBounds symmetric(std::size_t n, double half_width);

  std::size_t size() const { return lo.size(); }
  bool empty() const { return lo.empty(); }
  bool contains(std::span<const double> x) const;
  /// Corner selected by `bits` (1 = hi, 0 = lo).
  Vec corner(std::span<const std::uint8_t> bits) const;
  /// Corner number `index` in the enumeration where bit i of index picks hi for dim i.
  Vec corner(std::size_t index) const;
  std::size_t corner_count() const { return std::size_t{1} << size(); }
};

std::string format_vec(std::span<const double> v);

}  // namespace reachcls
