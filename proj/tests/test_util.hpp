#pragma once

#include <filesystem>
#include <string>

#include "reachcls/core.hpp"
#include "reachcls/nn.hpp"

namespace testutil {

/// Fresh, empty directory under the build tree for one test.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const std::filesystem::path dir = std::filesystem::path(REACHCLS_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::filesystem::path source_path(const std::string& rel) {
  return std::filesystem::path(REACHCLS_SOURCE_DIR) / rel;
}

/// Classifier whose decision is 1 (max corner) iff normalized input `dim`
/// is <= 0, built by hand so a test knows its policy exactly.
inline reachcls::MlpClassifier sign_classifier(std::size_t input_dim, std::size_t dim,
                                               const reachcls::InputNormalizer& norm) {
  reachcls::MlpClassifier c(input_dim, norm);
  auto p = c.parameters();
  const std::size_t h = reachcls::MlpClassifier::kHidden;
  const std::size_t w1 = 0, b1 = w1 + h * input_dim, w2 = b1 + h, b2 = w2 + h * h, w3 = b2 + h;
  p[w1 + 0 * input_dim + dim] = -1.0;  // unit 0: relu(-x)
  p[w1 + 1 * input_dim + dim] = 1.0;   // unit 1: relu(x)
  p[w2 + 0 * h + 0] = 1.0;
  p[w2 + 1 * h + 1] = 1.0;
  p[w3 + 0 * h + 1] = 1.0;  // min-corner logit grows with x
  p[w3 + 1 * h + 0] = 1.0;  // max-corner logit grows with -x
  return c;
}

}  // namespace testutil
