#include <doctest.h>

#include <algorithm>
#include <random>

#include "fixtures.hpp"
#include "i2l/error.hpp"
#include "i2l/features.hpp"
#include "i2l/policies.hpp"

using namespace i2l;
using fixtures::state;

namespace {

// Ego on loop 0 at 10. Loop 0 also holds vehicles at 30 and 55; loop 1 holds
// vehicles at 20 and 40.
MarkovState scene() {
  return state({{0, 10.0, 0.4}, {0, 30.0, 0.7}, {0, 55.0, 0.2}, {1, 20.0, 0.9}, {1, 40.0, 0.5}});
}

struct Pinned {
  const char* expr;
  double value;
};

// Values worked out by hand on the scene above.
const Pinned kPinned[] = {
    {"speed(ego)", 0.4},
    {"sep(pos(fj(ego)),pos(ego))", 15.0},
    {"sep(pos(twin(fj(ego))),pos(ba(twin(fj(ego)))))", 5.0},
    {"sub(sep(pos(fj(ego)),pos(ego)),sep(pos(twin(fj(ego))),pos(ba(twin(fj(ego))))))", 10.0},
    {"sub(speed(ego),speed(ba(twin(fj(ego)))))", -0.5},
    {"sep(pos(fa(ego)),pos(ego))", 20.0},
    {"speed(fa(ego))", 0.7},
    {"speed(ba(ego))", 0.2},
    {"sep(pos(ego),pos(ba(ego)))", 15.0},
    {"sep(pos(ego),pos(fa(ego)))", 40.0},
    {"speed(fa(fa(ego)))", 0.2},
    {"speed(ba(fj(ego)))", 0.4},
    {"speed(fa(fj(ego)))", 0.7},
    {"sep(pos(fa(fj(ego))),pos(fj(ego)))", 5.0},
    {"speed(fa(twin(fj(ego))))", 0.5},
    {"sep(pos(fa(twin(fj(ego)))),pos(twin(fj(ego))))", 15.0},
    {"sep(pos(fj(ego)),pos(twin(fj(ego))))", 60.0},
    {"sep(pos(fj(fa(ego))),pos(fa(ego)))", 20.0},
    {"speed(ba(twin(fj(fa(ego)))))", 0.5},
    {"sub(speed(ego),speed(fa(ego)))", -0.3},
    {"sep(pos(fj(ego)),pos(fa(ego)))", 55.0},
    {"speed(fa(ba(twin(fj(ego)))))", 0.5},
    {"speed(ba(ba(ego)))", 0.7},
    {"sep(pos(ba(twin(fj(ego)))),pos(ba(ba(twin(fj(ego))))))", 40.0},
};

}  // namespace

TEST_CASE("pinned feature values") {
  const Topology t = fixtures::twin60();
  const MarkovState s = scene();
  for (const auto& p : kPinned) {
    CAPTURE(p.expr);
    CHECK(eval_feature(FeatureExpr::parse(p.expr), s, t, 0) == doctest::Approx(p.value).epsilon(1e-12));
  }
}

TEST_CASE("sentinels without a junction or neighbours") {
  const Topology t = fixtures::solo60();
  const auto s = state({{0, 10.0, 0.4}});
  CHECK(eval_feature(FeatureExpr::parse("sep(pos(fj(ego)),pos(ego))"), s, t, 0) == 60.0);
  CHECK(eval_feature(FeatureExpr::parse("speed(ba(twin(fj(ego))))"), s, t, 0) == 0.0);
  CHECK(eval_feature(FeatureExpr::parse("sep(pos(fa(ego)),pos(ego))"), s, t, 0) == 60.0);
  CHECK(eval_feature(FeatureExpr::parse("sub(speed(ego),speed(fa(ego)))"), s, t, 0) == doctest::Approx(0.4));
}

TEST_CASE("enumeration at small depth") {
  const FeatureSet one = enumerate_features(1);
  REQUIRE(one.size() == 1);
  CHECK(one.features[0].canonical() == "speed(ego)");
  CHECK_THROWS(enumerate_features(0));
}

TEST_CASE("enumeration at depth 6 contains phi_F") {
  const FeatureSet all = enumerate_features(6);
  CHECK(all.size() == 1032);
  for (auto e : phi_F_expressions()) CHECK(all.index_of(e) >= 0);
  CHECK_NOTHROW(all.validate());
  for (const auto& f : all.features) {
    CHECK(f.depth() <= 6);
    CHECK(is_scalar(f.term().sort()));
  }
}

TEST_CASE("enumeration is monotone in depth") {
  const FeatureSet five = enumerate_features(5);
  const FeatureSet six = enumerate_features(6);
  CHECK(five.size() < six.size());
  for (const auto& f : five.features) CHECK(six.index_of(f.canonical()) >= 0);
}

TEST_CASE("terms are well sorted") {
  CHECK_THROWS_AS(parse_term("speed(pos(ego))"), InputError);
  CHECK_THROWS_AS(parse_term("sub(speed(ego),sep(pos(ego),pos(fa(ego))))"), InputError);
  CHECK_THROWS_AS(parse_term("fj(ego"), InputError);
  CHECK_THROWS_AS(FeatureExpr::parse("fa(ego)"), InputError);
  CHECK_THROWS_AS(parse_term(" speed(ego)"), InputError);
  CHECK(parse_term("sep(pos(fa(ego)),pos(ego))")->canonical() == "sep(pos(fa(ego)),pos(ego))");
}

TEST_CASE("compiled program agrees with direct evaluation") {
  const FeatureSet set = enumerate_features(5);
  const FeatureProgram program(set);
  CHECK(program.node_count() < set.size() * 3);
  std::vector<double> out(set.size());
  for (char id : std::string("ABCDE")) {
    const Topology t = preset_topology(id);
    const auto h = run_episode(t, random_policy(2), 11, 30, 8);
    for (std::size_t r = 0; r < h.records.size(); r += 7) {
      for (int ego = 0; ego < 11; ego += 3) {
        program.evaluate(h.records[r].state, t, ego, out);
        for (std::size_t f = 0; f < set.size(); ++f) CHECK(out[f] == eval_feature(set.features[f], h.records[r].state, t, ego));
      }
    }
  }
}

TEST_CASE("evaluate_matrix counts, order and determinism") {
  const Topology t = preset_topology('A');
  auto h = run_episode(t, fully_imitable_policy(), 11, 3, 1);
  REQUIRE(h.steps() == 3);
  const FeatureSet set = phi_F_set();
  const Dataset d = evaluate_matrix(set, h, t, 4, 2);
  CHECK(d.rows() == 33);
  CHECK(d.feature_names() == set.names());
  CHECK(d.episode(0) == 4);
  CHECK(d.topology_index(32) == 2);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    const int step = static_cast<int>(r / 11), ego = static_cast<int>(r % 11);
    CHECK(d.label(r) == h.records[step].actions[ego]);
    CHECK(d.at(r, 1) == eval_feature(set.features[1], h.records[step].state, t, ego));
  }
  const Dataset again = evaluate_matrix(set, h, t, 4, 2);
  for (std::size_t r = 0; r < d.rows(); ++r)
    for (std::size_t c = 0; c < d.cols(); ++c) CHECK(d.at(r, c) == again.at(r, c));
}

TEST_CASE("feature set JSON round trip") {
  const FeatureSet set = enumerate_features(4);
  const FeatureSet back = feature_set_from_json(feature_set_to_json(set));
  CHECK(back.names() == set.names());
  CHECK_THROWS(feature_set_from_json(R"j(["speed(ego)","speed(ego)"])j"));
  CHECK_THROWS(feature_set_from_json("{"));
}
