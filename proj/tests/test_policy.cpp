#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "reachcls/policy.hpp"
#include "test_util.hpp"

using namespace reachcls;

namespace {

PolicyStack small_stack(DisturbanceSource src, int layers, bool quantized) {
  const auto m = make_quad_rel_x();
  PolicyStack stack = PolicyStack::for_model(*m, TimeGrid{0.05, 10, 2}, src);
  for (int k = 0; k < layers; ++k) {
    auto make = [&](std::uint64_t seed) {
      MlpClassifier c = init_mlp(2, seed, stack.normalizer());
      if (!quantized) {
        for (double& v : c.parameters()) v += 1e-9;
      }
      return c;
    };
    std::vector<MlpClassifier> dist;
    if (src == DisturbanceSource::Learned) dist = {make(100 + k), make(200 + k)};
    stack.push_layer({make(k)}, std::move(dist));
  }
  return stack;
}

}  // namespace

TEST_SUITE("policy") {

TEST_CASE("layer_index covers stored depth and reuses the deepest layer once converged") {
  PolicyStack s = small_stack(DisturbanceSource::None, 3, true);
  CHECK(s.layer_index(0) == 0);
  CHECK(s.layer_index(2) == 2);
  CHECK_THROWS_AS(s.layer_index(3), InvalidArgument);
  CHECK_THROWS_AS(s.layer_index(-1), InvalidArgument);
  s.mark_converged(2);
  CHECK(s.layer_index(7) == 2);
  s.truncate_to_converged();
  CHECK(s.depth() == 1);
  CHECK(s.layer_index(0) == 0);
  CHECK(s.layer_index(9) == 0);
  CHECK_THROWS_AS(s.push_layer({init_mlp(2, 1)}, {}), InvalidArgument);
  PolicyStack fresh = small_stack(DisturbanceSource::None, 1, true);
  CHECK_THROWS_AS(fresh.truncate_to_converged(), InvalidArgument);
}

TEST_CASE("push_layer checks classifier counts") {
  const auto m = make_quad_rel_x();
  PolicyStack s = PolicyStack::for_model(*m, TimeGrid{0.1, 2, 1}, DisturbanceSource::Learned);
  CHECK_THROWS_AS(s.push_layer({init_mlp(2, 1)}, {}), InvalidArgument);
  CHECK_THROWS_AS(s.push_layer({}, {init_mlp(2, 1), init_mlp(2, 2)}), InvalidArgument);
  CHECK_NOTHROW(s.push_layer({init_mlp(2, 1)}, {init_mlp(2, 2), init_mlp(2, 3)}));
  CHECK(s.classifier_count() == 3);
  CHECK(s.parameter_count() == 3 * MlpClassifier::parameter_count_for(2));
  CHECK_THROWS_AS(PolicyStack::for_model(*make_point2d(IntervalBounds::symmetric(2, 1.0)),
                                         TimeGrid{}, DisturbanceSource::Learned),
                  InvalidArgument);
}

TEST_CASE("decisions are bang-bang corners") {
  const PolicyStack s = small_stack(DisturbanceSource::Learned, 2, true);
  const Vec st{0.3, -0.2};
  const Vec u = s.eval_control(1, st);
  CHECK((u[0] == s.u_bounds().lo[0] || u[0] == s.u_bounds().hi[0]));
  const Vec d = s.eval_disturbance(0, st);
  for (std::size_t j = 0; j < d.size(); ++j) {
    CHECK((d[j] == s.d_bounds().lo[j] || d[j] == s.d_bounds().hi[j]));
  }
  CHECK(u[0] == (s.control_layer(1)[0].classify(st) ? s.u_bounds().hi[0] : s.u_bounds().lo[0]));
  const PolicyStack none = small_stack(DisturbanceSource::None, 1, true);
  CHECK(none.eval_disturbance(0, st) == none.d_bounds().lo);
}

TEST_CASE("analytic disturbance must be attached and named consistently") {
  PolicyStack s = small_stack(DisturbanceSource::Analytic, 1, true);
  CHECK_THROWS_AS(s.eval_disturbance(0, Vec{0.0, 0.0}), InvalidArgument);
  s.set_analytic_disturbance({"test_rule", [](auto, int, std::span<double> out) {
                                for (double& v : out) v = 0.125;
                              }});
  CHECK(s.eval_disturbance(0, Vec{0.0, 0.0}) == Vec{0.125, 0.125});
  PolicyStack back = policy_from_json(policy_to_json(s));
  CHECK(back.analytic_rule_name() == "test_rule");
  CHECK_FALSE(back.has_analytic_rule());
  CHECK_THROWS_AS(back.set_analytic_disturbance({"other", [](auto, int, std::span<double>) {}}),
                  InvalidArgument);
  PolicyStack learned = small_stack(DisturbanceSource::Learned, 1, true);
  CHECK_THROWS_AS(learned.set_analytic_disturbance({"x", [](auto, int, std::span<double>) {}}),
                  InvalidArgument);
}

TEST_CASE("serialization round trips exactly in both encodings") {
  for (bool quantized : {true, false}) {
    PolicyStack s = small_stack(DisturbanceSource::Learned, 3, quantized);
    s.mark_converged(2);
    for (auto enc : {ParamEncoding::Compact, ParamEncoding::Decimal}) {
      const PolicyStack back = policy_from_json(policy_to_json(s, enc));
      CHECK(back.depth() == 3);
      CHECK(back.converged());
      CHECK(back.converged_step() == 2);
      CHECK(back.time_grid() == s.time_grid());
      CHECK(back.control_layers() == s.control_layers());
      CHECK(back.disturbance_layers() == s.disturbance_layers());
      CHECK(policy_to_string(back, enc) == policy_to_string(s, enc));
    }
  }
  PolicyStack t = small_stack(DisturbanceSource::None, 2, true);
  t.mark_converged(1);
  t.truncate_to_converged();
  const PolicyStack tb = policy_from_json(policy_to_json(t));
  CHECK(tb.truncated());
  CHECK(tb.control_layers() == t.control_layers());
}

TEST_CASE("compact encoding of float32 weights is smaller than decimal") {
  const PolicyStack s = small_stack(DisturbanceSource::Learned, 2, true);
  CHECK(policy_to_string(s, ParamEncoding::Compact).size() * 2 <
        policy_to_string(s, ParamEncoding::Decimal).size());
}

TEST_CASE("malformed policy files are rejected with a field path") {
  const PolicyStack s = small_stack(DisturbanceSource::Learned, 2, true);
  const nlohmann::json good = policy_to_json(s);
  auto expect_field = [](const nlohmann::json& j, const std::string& field) {
    try {
      policy_from_json(j);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.field() == field);
    }
  };
  nlohmann::json j = good;
  j["layers"][1]["control"] = nlohmann::json::array();
  expect_field(j, "policy.layers[1].control");
  j = good;
  j["layers"][0]["disturbance"][1] = "@@@@";
  expect_field(j, "policy.layers[0].disturbance[1]");
  j = good;
  j["layers"][1]["k"] = 5;
  expect_field(j, "policy.layers[1].k");
  j = good;
  j.erase("time_grid");
  expect_field(j, "policy");
  j = good;
  j["format_version"] = 99;
  expect_field(j, "policy.format_version");

  const auto dir = testutil::scratch_dir("policy_io");
  CHECK_THROWS_AS(load_policy(dir / "missing.json"), IoError);
  std::ofstream(dir / "broken.json") << "{ not json";
  CHECK_THROWS_AS(load_policy(dir / "broken.json"), ConfigError);
  save_policy(s, dir / "ok.json");
  CHECK(load_policy(dir / "ok.json").control_layers() == s.control_layers());
}

TEST_CASE("base64 round trip and validation") {
  for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 17u}) {
    std::vector<std::uint8_t> bytes(n);
    for (std::size_t i = 0; i < n; ++i) bytes[i] = static_cast<std::uint8_t>(i * 37 + 5);
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
  }
  CHECK(base64_encode(std::vector<std::uint8_t>{'M', 'a', 'n'}) == "TWFu");
  CHECK(base64_encode(std::vector<std::uint8_t>{'M'}) == "TQ==");
  CHECK_THROWS_AS(base64_decode("abc"), InvalidArgument);
  CHECK_THROWS_AS(base64_decode("ab!d"), InvalidArgument);
  CHECK(decimal17(0.1) == "0.10000000000000001");
}

}
