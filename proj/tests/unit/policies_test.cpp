#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "fixtures.hpp"
#include "i2l/policies.hpp"

using namespace i2l;
using fixtures::state;

namespace {

PhiFVector features(double v, double d, double c, double dv, double g) {
  return {v, d, c, d - c, dv, g};
}

}  // namespace

TEST_CASE("pi_F accelerates on a clear road") {
  const auto s = state({{0, 10.0, 0.0}});
  CHECK(pi_F(s, fixtures::solo60(), 0) == kAccelHard);
}

TEST_CASE("pi_F holds at full speed with no conflict") {
  const auto s = state({{0, 10.0, 1.0}});
  CHECK(pi_F(s, fixtures::solo60(), 0) == kHold);
}

TEST_CASE("pi_F yields to a rival that arrives first") {
  // ego 4 from its junction, rival 3 from the twin endpoint and faster
  const auto s = state({{0, 21.0, 0.5}, {1, 22.0, 0.8}});
  const auto f = phi_F(s, fixtures::twin60(), 0);
  CHECK(f[kJunctionGap] == doctest::Approx(4.0));
  CHECK(f[kRivalGap] == doctest::Approx(3.0));
  CHECK(pi_F(s, fixtures::twin60(), 0) == kBrakeHard);
}

TEST_CASE("pi_F rule table") {
  using R = RuleTable;
  CHECK(pi_F_rules(features(0.5, 40, 60, 0.5, R::kFollowBrake - 0.1)) == kBrakeHard);
  CHECK(pi_F_rules(features(0.7, 40, 60, 0.7, 7.0)) == kBrake);
  CHECK(pi_F_rules(features(0.2, 40, 60, 0.2, 7.0)) == kAccel);
  CHECK(pi_F_rules(features(0.45, 40, 60, 0.45, 7.0)) == kHold);
  CHECK(pi_F_rules(features(0.3, 40, 60, 0.3, 60)) == kAccelHard);
  CHECK(pi_F_rules(features(0.8, 40, 60, 0.8, 60)) == kAccel);
  // ego ahead in the contest keeps going
  CHECK(pi_F_rules(features(0.8, 5, 9, 0.0, 60)) == kAccel);
  // rival ahead: stop inside the stop zone, slow down beyond it
  CHECK(pi_F_rules(features(0.8, 7, 5, 0.0, 60)) == kBrakeHard);
  CHECK(pi_F_rules(features(0.8, 10, 5, 0.0, 60)) == kBrake);
  CHECK(pi_F_rules(features(0.1, 10, 5, 0.0, 60)) == kAccel);
  // equal gaps: the faster vehicle goes first
  CHECK(pi_F_rules(features(0.5, 6, 6, -0.2, 60)) == kBrakeHard);
  CHECK(pi_F_rules(features(0.5, 6, 6, 0.2, 60)) == kAccelHard);
  // a rival already committed always wins
  CHECK(pi_F_rules(features(0.5, 6, 2, 0.9, 60)) == kBrakeHard);
  // once committed the ego ignores the rival
  CHECK(pi_F_rules(features(0.5, 2, 1, 0.0, 60)) == kAccelHard);
  // blocked exit
  CHECK(pi_F_rules(features(0.5, 5, 60, 0.0, 12)) == kBrakeHard);
  CHECK(pi_F_rules(features(0.5, 5, 60, 0.0, 15)) == kAccelHard);
}

TEST_CASE("pi_F depends only on phi_F") {
  const Topology t = preset_topology('C');
  const auto h = run_episode(t, random_policy(1), 11, 60, 2);
  for (const auto& r : h.records)
    for (int ego = 0; ego < 11; ++ego) CHECK(pi_F(r.state, t, ego) == pi_F_rules(phi_F(r.state, t, ego)));
}

TEST_CASE("nearest action quantisation") {
  CHECK(nearest_action(1.0) == kAccelHard);
  CHECK(nearest_action(0.0) == kHold);
  CHECK(nearest_action(0.45 - 0.6) == kBrakeHard);
  CHECK(nearest_action(-0.15) == kBrakeHard);
  CHECK(nearest_action(0.05) == kHold);
  CHECK(nearest_action(-1.0) == kBrakeHard);
}

TEST_CASE("pi_P controller") {
  const ProportionalParams p;
  CHECK(pi_P_target_speed(std::numeric_limits<double>::infinity(), p) == 1.0);
  CHECK(pi_P_target_speed(1e9, p) == 1.0);
  CHECK(pi_P_target_speed(p.safe_distance, p) == 0.0);
  CHECK(pi_P_target_speed(p.safe_distance + 2.0, p) == doctest::Approx(0.5));
  CHECK(pi_P(state({{0, 10.0, 0.0}}), fixtures::solo60(), 0) == kAccelHard);
  // leader at d_safe + vehicle length: target speed 0 from rest
  const auto s = state({{0, 10.0, 0.0}, {0, 16.0, 0.0}});
  CHECK(pi_P_effective_gap(s, fixtures::solo60(), 0) == doctest::Approx(4.0));
  CHECK(pi_P(s, fixtures::solo60(), 0) == kHold);
}

TEST_CASE("pi_P yields at a contested junction") {
  const Topology t = fixtures::twin60();
  const auto contested = state({{0, 15.0, 0.5}, {1, 22.0, 0.8}});
  CHECK(pi_P_effective_gap(contested, t, 0) == doctest::Approx(10.0 - SimParams{}.junction_window));
  // rival beyond the horizon: only the leader counts
  const auto clear = state({{0, 15.0, 0.5}, {1, 5.0, 0.1}, {0, 45.0, 0.5}});
  CHECK(pi_P_effective_gap(clear, t, 0) == doctest::Approx(28.0));
}

TEST_CASE("phi_F components") {
  const Topology t = fixtures::twin60();
  const auto f = phi_F(state({{0, 10.0, 0.4}, {0, 30.0, 0.0}}), t, 0);
  CHECK(f[kEgoSpeed] == 0.4);
  CHECK(f[kJunctionGap] == 15.0);
  CHECK(f[kRivalGap] == 60.0);
  CHECK(f[kGapDifference] == -45.0);
  CHECK(f[kSpeedDifference] == doctest::Approx(0.4));
  CHECK(f[kLeaderGap] == 20.0);
}

TEST_CASE("phi_naive geometry") {
  const Topology t = fixtures::solo60();
  const double r = 60.0 / (2.0 * std::numbers::pi);
  // a vehicle a quarter lap ahead sits at 45 degrees to the left
  const auto v = phi_naive(state({{0, 0.0, 0.5}, {0, 15.0, 0.5}}), t, 0, 1);
  REQUIRE(v.size() == 4);
  CHECK(v[0] == doctest::Approx(r * std::sqrt(2.0)));
  CHECK(v[1] == doctest::Approx(std::numbers::pi / 4.0));
  CHECK(v[3] == doctest::Approx(std::numbers::pi / 2.0));

  const auto alone = phi_naive(state({{0, 0.0, 0.5}}), t, 0, 3);
  REQUIRE(alone.size() == 12);
  for (int i = 0; i < 3; ++i) {
    CHECK(alone[4 * i] == 60.0);
    CHECK(alone[4 * i + 1] == 0.0);
    CHECK(alone[4 * i + 2] == 0.0);
    CHECK(alone[4 * i + 3] == 0.0);
  }
  CHECK(phi_naive_names(2).size() == 8);
}

TEST_CASE("phi_naive normal velocity of an agent moving away") {
  // straight-line check on a large loop: the other vehicle is just ahead and faster
  const Topology t("big", {{6000.0, Embedding::circle({0.0, 0.0}, 0.0)}}, {});
  const auto v = phi_naive(state({{0, 0.0, 0.2}, {0, 5.0, 0.9}}), t, 0, 1);
  CHECK(v[0] == doctest::Approx(5.0).epsilon(1e-4));
  CHECK(std::abs(v[1]) < 1e-2);
  CHECK(v[2] == doctest::Approx(0.7).epsilon(1e-3));
}

TEST_CASE("policy kinds") {
  CHECK(policy_kind_from_string("pi_F") == PolicyKind::FullyImitable);
  CHECK(policy_kind_from_string("partially-imitable") == PolicyKind::PartiallyImitable);
  CHECK(to_string(PolicyKind::Random) == "random");
  CHECK_THROWS(policy_kind_from_string("oracle"));
}

TEST_CASE("random policy is reproducible and covers every action") {
  const auto p = random_policy(3);
  const auto s = state({{0, 10.0, 0.0}});
  std::set<int> seen;
  MarkovState m = s;
  for (int t = 0; t < 200; ++t) {
    m.time = t;
    const int a = p(m, fixtures::solo60(), 0);
    CHECK(a == p(m, fixtures::solo60(), 0));
    seen.insert(a);
  }
  CHECK(seen.size() == 5);
}

TEST_CASE("target policies do not collide on the presets") {
  for (char id : std::string("ABCDE")) {
    const Topology t = preset_topology(id);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      CHECK(run_episode(t, fully_imitable_policy(), 11, 500, seed).termination != Termination::Collision);
      CHECK(run_episode(t, partially_imitable_policy(), 11, 500, seed).termination != Termination::Collision);
    }
  }
}

TEST_CASE("pi_P is not a function of phi_F") {
  // a second, faster vehicle behind the twin endpoint changes pi_P but not phi_F
  const Topology t = fixtures::twin60();
  const auto one = state({{0, 19.0, 0.5}, {1, 17.0, 0.1}});
  const auto two = state({{0, 19.0, 0.5}, {1, 17.0, 0.1}, {1, 14.0, 1.0}});
  CHECK(phi_F(one, t, 0) == phi_F(two, t, 0));
  CHECK(pi_P(one, t, 0) == kAccelHard);
  CHECK(pi_P(two, t, 0) == kBrakeHard);
  CHECK(pi_F(one, t, 0) == pi_F(two, t, 0));
}
