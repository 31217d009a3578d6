#include "reachcls/policy.hpp"

#include <bit>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

namespace reachcls {

std::string to_string(DisturbanceSource s) {
  switch (s) {
    case DisturbanceSource::None:
      return "none";
    case DisturbanceSource::Learned:
      return "learned";
    case DisturbanceSource::Analytic:
      return "analytic";
  }
  return "none";
}

PolicyStack::PolicyStack(std::string model_name, TimeGrid time_grid, std::size_t state_dim,
                         IntervalBounds u_bounds, IntervalBounds d_bounds,
                         InputNormalizer normalizer, DisturbanceSource source)
    : model_name_(std::move(model_name)),
      time_grid_(time_grid),
      state_dim_(state_dim),
      u_bounds_(std::move(u_bounds)),
      d_bounds_(std::move(d_bounds)),
      normalizer_(std::move(normalizer)),
      source_(source) {
  time_grid_.validate();
  if (normalizer_.size() != state_dim_) throw InvalidArgument("policy: normalizer dimension mismatch");
  if (source_ == DisturbanceSource::Learned && d_bounds_.empty()) {
    throw InvalidArgument("policy: learned disturbance requires N_d > 0");
  }
}

PolicyStack PolicyStack::for_model(const ControlAffineModel& model, TimeGrid time_grid,
                                   DisturbanceSource source) {
  return PolicyStack(std::string(model.name()), time_grid, model.state_dim(), model.u_bounds(),
                     model.d_bounds(), InputNormalizer(model.state_box()), source);
}

void PolicyStack::mark_converged(int step) {
  converged_ = true;
  converged_step_ = step;
}

void PolicyStack::set_analytic_disturbance(AnalyticDisturbance rule) {
  if (source_ != DisturbanceSource::Analytic) {
    throw InvalidArgument("policy: disturbance source is " + to_string(source_) + ", not analytic");
  }
  if (!rule_name_.empty() && rule.name != rule_name_) {
    throw InvalidArgument("policy: analytic rule '" + rule.name + "' does not match recorded '" +
                          rule_name_ + "'");
  }
  rule_name_ = rule.name;
  rule_ = std::move(rule);
}

void PolicyStack::push_layer(std::vector<MlpClassifier> control, std::vector<MlpClassifier> disturbance) {
  if (truncated_) throw InvalidArgument("policy: cannot extend a truncated stack");
  if (control.size() != control_dim()) {
    throw InvalidArgument("policy: layer has " + std::to_string(control.size()) +
                          " control classifiers, expected " + std::to_string(control_dim()));
  }
  const std::size_t expected_d = source_ == DisturbanceSource::Learned ? disturbance_dim() : 0;
  if (disturbance.size() != expected_d) {
    throw InvalidArgument("policy: layer has " + std::to_string(disturbance.size()) +
                          " disturbance classifiers, expected " + std::to_string(expected_d));
  }
  for (const auto* group : {&control, &disturbance}) {
    for (const auto& c : *group) {
      if (c.input_dim() != state_dim_) throw InvalidArgument("policy: classifier input dimension mismatch");
    }
  }
  control_layers_.push_back(std::move(control));
  disturbance_layers_.push_back(std::move(disturbance));
}

std::size_t PolicyStack::layer_index(int k) const {
  if (k < 0) throw InvalidArgument("policy: negative step index");
  if (control_layers_.empty()) throw InvalidArgument("policy: stack has no layers");
  if (truncated_) return 0;
  const auto uk = static_cast<std::size_t>(k);
  if (uk < control_layers_.size()) return uk;
  if (converged_) return control_layers_.size() - 1;
  throw InvalidArgument("policy: step " + std::to_string(k) + " beyond stack depth " +
                        std::to_string(control_layers_.size()) + " and stack not converged");
}

const std::vector<MlpClassifier>& PolicyStack::control_layer(int k) const {
  return control_layers_[layer_index(k)];
}

const std::vector<MlpClassifier>& PolicyStack::disturbance_layer(int k) const {
  return disturbance_layers_[layer_index(k)];
}

void PolicyStack::check_state(std::span<const double> s) const {
  if (s.size() != state_dim_) throw InvalidArgument("policy: state dimension mismatch");
}

void PolicyStack::control_bits_into(int k, std::span<const double> s, std::span<std::uint8_t> out) const {
  const auto& layer = control_layer(k);
  for (std::size_t i = 0; i < layer.size(); ++i) out[i] = layer[i].classify(s) ? 1 : 0;
}

void PolicyStack::eval_control_into(int k, std::span<const double> s, std::span<double> out) const {
  const auto& layer = control_layer(k);
  for (std::size_t i = 0; i < layer.size(); ++i) {
    out[i] = layer[i].classify(s) ? u_bounds_.hi[i] : u_bounds_.lo[i];
  }
}

void PolicyStack::eval_disturbance_into(int k, std::span<const double> s, std::span<double> out) const {
  switch (source_) {
    case DisturbanceSource::None:
      for (std::size_t j = 0; j < out.size(); ++j) out[j] = d_bounds_.lo[j];
      return;
    case DisturbanceSource::Analytic:
      if (!rule_.rule) {
        throw InvalidArgument("policy: analytic disturbance rule '" + rule_name_ + "' not attached");
      }
      rule_.rule(s, k, out);
      return;
    case DisturbanceSource::Learned: {
      const auto& layer = disturbance_layer(k);
      for (std::size_t j = 0; j < layer.size(); ++j) {
        out[j] = layer[j].classify(s) ? d_bounds_.hi[j] : d_bounds_.lo[j];
      }
      return;
    }
  }
}

ControlVec PolicyStack::eval_control(int k, std::span<const double> s) const {
  check_state(s);
  ControlVec u(control_dim());
  eval_control_into(k, s, u);
  return u;
}

DisturbVec PolicyStack::eval_disturbance(int k, std::span<const double> s) const {
  check_state(s);
  DisturbVec d(disturbance_dim());
  eval_disturbance_into(k, s, d);
  return d;
}

void PolicyStack::truncate_to_converged() {
  if (!converged_) throw InvalidArgument("policy: truncate_to_converged on a non-converged stack");
  if (control_layers_.empty()) throw InvalidArgument("policy: stack has no layers");
  control_layers_.erase(control_layers_.begin(), control_layers_.end() - 1);
  disturbance_layers_.erase(disturbance_layers_.begin(), disturbance_layers_.end() - 1);
  truncated_ = true;
}

std::size_t PolicyStack::classifier_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < control_layers_.size(); ++k) {
    n += control_layers_[k].size() + disturbance_layers_[k].size();
  }
  return n;
}

std::size_t PolicyStack::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < control_layers_.size(); ++k) {
    for (const auto& c : control_layers_[k]) n += c.parameter_count();
    for (const auto& c : disturbance_layers_[k]) n += c.parameter_count();
  }
  return n;
}

// --- serialization -----------------------------------------------------------

std::string decimal17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_decimal(const nlohmann::json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (!j.is_string()) throw ConfigError(path, "expected decimal string");
  const std::string s = j.get<std::string>();
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    throw ConfigError(path, "malformed decimal '" + s + "'");
  }
  return v;
}

namespace {

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

nlohmann::json decimal_array(std::span<const double> v) {
  auto a = nlohmann::json::array();
  for (double x : v) a.push_back(decimal17(x));
  return a;
}

Vec decimal_vec(const nlohmann::json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected array");
  Vec out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(parse_decimal(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

nlohmann::json bounds_json(const IntervalBounds& b) {
  return {{"lo", decimal_array(b.lo)}, {"hi", decimal_array(b.hi)}};
}

const nlohmann::json& field(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected object");
  if (!j.contains(key)) throw ConfigError(path, std::string("missing field '") + key + "'");
  return j.at(key);
}

IntervalBounds bounds_from(const nlohmann::json& j, const std::string& path) {
  try {
    return IntervalBounds(decimal_vec(field(j, "lo", path), path + ".lo"),
                          decimal_vec(field(j, "hi", path), path + ".hi"));
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
}

std::string encode_params(std::span<const double> p, bool f32) {
  std::vector<std::uint8_t> bytes;
  if (f32) {
    bytes.reserve(p.size() * 4);
    for (double v : p) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  } else {
    bytes.reserve(p.size() * 8);
    for (double v : p) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  return base64_encode(bytes);
}

Vec decode_params(const nlohmann::json& j, const std::string& encoding, const std::string& path) {
  if (encoding == "decimal") return decimal_vec(j, path);
  if (!j.is_string()) throw ConfigError(path, "expected base64 string");
  std::vector<std::uint8_t> bytes;
  try {
    bytes = base64_decode(j.get<std::string>());
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
  Vec out;
  if (encoding == "base64-f32") {
    if (bytes.size() % 4) throw ConfigError(path, "float32 payload length not a multiple of 4");
    for (std::size_t i = 0; i < bytes.size(); i += 4) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[i + b]) << (8 * b);
      out.push_back(static_cast<double>(std::bit_cast<float>(bits)));
    }
  } else if (encoding == "base64-f64") {
    if (bytes.size() % 8) throw ConfigError(path, "float64 payload length not a multiple of 8");
    for (std::size_t i = 0; i < bytes.size(); i += 8) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i + b]) << (8 * b);
      out.push_back(std::bit_cast<double>(bits));
    }
  } else {
    throw ConfigError(path, "unknown parameter encoding '" + encoding + "'");
  }
  return out;
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (i < bytes.size()) {
    std::uint32_t v = bytes[i] << 16;
    if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += i + 1 < bytes.size() ? kB64[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4) throw InvalidArgument("base64: length not a multiple of 4");
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
        continue;
      }
      if (pad) throw InvalidArgument("base64: misplaced padding");
      v[k] = value(c);
      if (v[k] < 0) throw InvalidArgument("base64: invalid character");
    }
    const std::uint32_t w = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<std::uint8_t>(w >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(w >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(w));
  }
  return out;
}

nlohmann::json policy_to_json(const PolicyStack& stack, ParamEncoding enc) {
  std::string encoding = "decimal";
  if (enc == ParamEncoding::Compact) {
    bool all_f32 = true;
    for (std::size_t k = 0; k < stack.depth() && all_f32; ++k) {
      for (const auto* group : {&stack.control_layers()[k], &stack.disturbance_layers()[k]}) {
        for (const auto& c : *group) all_f32 = all_f32 && c.is_f32_exact();
      }
    }
    encoding = all_f32 ? "base64-f32" : "base64-f64";
  }
  auto encode = [&](const MlpClassifier& c) -> nlohmann::json {
    if (encoding == "decimal") return decimal_array(c.parameters());
    return encode_params(c.parameters(), encoding == "base64-f32");
  };

  nlohmann::json j;
  j["format_version"] = kPolicyFormatVersion;
  j["model_name"] = stack.model_name();
  j["state_dim"] = stack.state_dim();
  j["time_grid"] = {{"dt", decimal17(stack.time_grid().dt)},
                    {"num_steps", stack.time_grid().num_steps},
                    {"substeps", stack.time_grid().substeps}};
  j["u_bounds"] = bounds_json(stack.u_bounds());
  j["d_bounds"] = bounds_json(stack.d_bounds());
  j["normalizers"] = {{"lo", decimal_array(stack.normalizer().lo)},
                      {"hi", decimal_array(stack.normalizer().hi)}};
  j["disturbance_source"] = {{"kind", to_string(stack.disturbance_source())}};
  if (stack.disturbance_source() == DisturbanceSource::Analytic) {
    j["disturbance_source"]["rule"] = stack.analytic_rule_name();
  }
  j["converged"] = stack.converged();
  j["converged_step"] = stack.converged_step();
  j["truncated"] = stack.truncated();
  j["param_encoding"] = encoding;
  auto layers = nlohmann::json::array();
  for (std::size_t k = 0; k < stack.depth(); ++k) {
    nlohmann::json layer;
    layer["k"] = stack.truncated() ? -1 : static_cast<int>(k);
    layer["control"] = nlohmann::json::array();
    for (const auto& c : stack.control_layers()[k]) layer["control"].push_back(encode(c));
    layer["disturbance"] = nlohmann::json::array();
    for (const auto& c : stack.disturbance_layers()[k]) layer["disturbance"].push_back(encode(c));
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  return j;
}

PolicyStack policy_from_json(const nlohmann::json& j) {
  const std::string root = "policy";
  const auto& version = field(j, "format_version", root);
  if (!version.is_number_integer() || version.get<int>() != kPolicyFormatVersion) {
    throw ConfigError(root + ".format_version",
                      "unsupported policy format version " + version.dump() + " (expected " +
                          std::to_string(kPolicyFormatVersion) + ")");
  }
  const auto& name = field(j, "model_name", root);
  if (!name.is_string()) throw ConfigError(root + ".model_name", "expected string");
  const auto& dim = field(j, "state_dim", root);
  if (!dim.is_number_integer() || dim.get<std::int64_t>() <= 0) {
    throw ConfigError(root + ".state_dim", "expected positive integer");
  }
  const std::size_t n = dim.get<std::size_t>();

  const auto& tg = field(j, "time_grid", root);
  TimeGrid grid;
  grid.dt = parse_decimal(field(tg, "dt", root + ".time_grid"), root + ".time_grid.dt");
  const auto& steps = field(tg, "num_steps", root + ".time_grid");
  const auto& subs = field(tg, "substeps", root + ".time_grid");
  if (!steps.is_number_integer() || !subs.is_number_integer()) {
    throw ConfigError(root + ".time_grid", "num_steps and substeps must be integers");
  }
  grid.num_steps = steps.get<int>();
  grid.substeps = subs.get<int>();

  const IntervalBounds u = bounds_from(field(j, "u_bounds", root), root + ".u_bounds");
  const IntervalBounds d = bounds_from(field(j, "d_bounds", root), root + ".d_bounds");
  const auto& norm_j = field(j, "normalizers", root);
  InputNormalizer norm(decimal_vec(field(norm_j, "lo", root + ".normalizers"), root + ".normalizers.lo"),
                       decimal_vec(field(norm_j, "hi", root + ".normalizers"), root + ".normalizers.hi"));
  if (norm.size() != n) throw ConfigError(root + ".normalizers", "dimension does not match state_dim");

  const auto& src = field(j, "disturbance_source", root);
  const std::string kind = field(src, "kind", root + ".disturbance_source").get<std::string>();
  DisturbanceSource source;
  if (kind == "none") {
    source = DisturbanceSource::None;
  } else if (kind == "learned") {
    source = DisturbanceSource::Learned;
  } else if (kind == "analytic") {
    source = DisturbanceSource::Analytic;
  } else {
    throw ConfigError(root + ".disturbance_source.kind", "unknown source '" + kind + "'");
  }

  PolicyStack stack;
  try {
    stack = PolicyStack(name.get<std::string>(), grid, n, u, d, norm, source);
  } catch (const InvalidArgument& e) {
    throw ConfigError(root, e.what());
  }
  if (source == DisturbanceSource::Analytic && src.contains("rule")) {
    stack.rule_name_ = src.at("rule").get<std::string>();
  }

  const std::string encoding = field(j, "param_encoding", root).get<std::string>();
  const std::size_t expected_params = MlpClassifier::parameter_count_for(n);
  const bool truncated = j.value("truncated", false);
  const auto& layers = field(j, "layers", root);
  if (!layers.is_array()) throw ConfigError(root + ".layers", "expected array");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const std::string lp = root + ".layers[" + std::to_string(k) + "]";
    const auto& layer = layers[k];
    const auto& kf = field(layer, "k", lp);
    const int expected_k = truncated ? -1 : static_cast<int>(k);
    if (!kf.is_number_integer() || kf.get<int>() != expected_k) {
      throw ConfigError(lp + ".k", "expected " + std::to_string(expected_k));
    }
    auto read_group = [&](const char* key, std::size_t expected) {
      const auto& g = field(layer, key, lp);
      if (!g.is_array() || g.size() != expected) {
        throw ConfigError(lp + "." + key, "expected " + std::to_string(expected) +
                                              " classifiers, found " +
                                              std::to_string(g.is_array() ? g.size() : 0));
      }
      std::vector<MlpClassifier> out;
      for (std::size_t c = 0; c < g.size(); ++c) {
        const std::string cp = lp + "." + key + "[" + std::to_string(c) + "]";
        Vec params = decode_params(g[c], encoding, cp);
        if (params.size() != expected_params) {
          throw ConfigError(cp, "expected " + std::to_string(expected_params) +
                                    " parameters, found " + std::to_string(params.size()));
        }
        MlpClassifier clf(n, norm);
        std::copy(params.begin(), params.end(), clf.parameters().begin());
        out.push_back(std::move(clf));
      }
      return out;
    };
    auto control = read_group("control", u.size());
    auto disturbance = read_group("disturbance", source == DisturbanceSource::Learned ? d.size() : 0);
    stack.push_layer(std::move(control), std::move(disturbance));
  }
  if (j.value("converged", false)) stack.mark_converged(j.value("converged_step", -1));
  if (truncated) {
    if (!stack.converged() || stack.depth() != 1) {
      throw ConfigError(root + ".truncated", "truncated stacks must be converged with one layer");
    }
    stack.truncated_ = true;
  }
  return stack;
}

std::string policy_to_string(const PolicyStack& stack, ParamEncoding enc) {
  return policy_to_json(stack, enc).dump() + "\n";
}

void save_policy(const PolicyStack& stack, const std::filesystem::path& path, ParamEncoding enc) {
  const std::string text = policy_to_string(stack, enc);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

PolicyStack load_policy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open policy file '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
  }
  return policy_from_json(j);
}

}  // namespace reachcls
