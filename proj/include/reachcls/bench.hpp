#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace reachcls {

// Canned experiment configurations. Each returns a document that passes the
// config schema; the copies under bench/ are generated from these.

/// "half" uses u in [-0.5, 0.5]^2, "full" u in [-1, 1]^2.
nlohmann::json bench_point2d(const std::string& bounds_variant);
/// "smoke": N = 20k with a 21^4 oracle; "full": N = 200k with a 41^4 oracle.
nlohmann::json bench_unicycle4d(const std::string& scale);
/// (r_x, s_vx) tracking subsystem; "analytic" takes d* from the solved oracle,
/// "learned" trains the disturbance classifiers jointly.
nlohmann::json bench_fastrack_x(const std::string& disturbance);
nlohmann::json bench_quad7d();

/// Names accepted by bench_by_name, e.g. "point2d_half", "fastrack_x_analytic".
std::vector<std::string> bench_names();
nlohmann::json bench_by_name(const std::string& name);

}  // namespace reachcls
