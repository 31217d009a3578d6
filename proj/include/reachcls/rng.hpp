#pragma once

#include <cstdint>
#include <string_view>

namespace reachcls {

/// Derives an independent sub-stream seed from the experiment seed, a stream
/// name (e.g. "sample", "init", "batch") and up to two indices.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                          std::uint64_t a = 0, std::uint64_t b = 0);

/// xoshiro256** seeded through splitmix64. Output sequence is fully specified,
/// so results do not depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t s_[4];
};

}  // namespace reachcls
