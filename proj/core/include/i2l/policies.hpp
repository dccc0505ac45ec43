#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "i2l/features.hpp"
#include "i2l/sim.hpp"

namespace i2l {

// Action indices into ActionSpace::standard().
enum Action : int { kBrakeHard = 0, kBrake = 1, kHold = 2, kAccel = 3, kAccelHard = 4 };

// --- six-feature representation used by the fully-imitable controller -----

enum PhiF : int {
  kEgoSpeed = 0,      // speed(ego)
  kJunctionGap,       // forward distance to the next junction
  kRivalGap,          // nearest vehicle behind the twin endpoint, its distance to it
  kGapDifference,     // kJunctionGap - kRivalGap
  kSpeedDifference,   // speed(ego) - rival speed
  kLeaderGap,         // forward distance to the vehicle ahead
  kPhiFSize
};

using PhiFVector = std::array<double, kPhiFSize>;

// Canonical strings of the six features, in PhiF order.
const std::array<std::string_view, kPhiFSize>& phi_F_expressions();
FeatureSet phi_F_set();
PhiFVector phi_F(const MarkovState& state, const Topology& topology, int ego);

// Thresholds of the fully-imitable rule table (track units, units/step).
struct RuleTable {
  static constexpr double kFollowBrake = 5.5;
  static constexpr double kFollowEase = 8.0;
  static constexpr double kCommit = 2.5;
  static constexpr double kHorizon = 12.0;
  static constexpr double kStopZone = 8.0;
  // The leader must be this far past the junction before the ego enters.
  // Tested as a staircase over (junction gap, leader gap).
  static constexpr double kExitRoom = 8.0;
  static constexpr double kSpillStep = 2.0;
  static constexpr double kGapBand = 0.5;
  static constexpr double kSpeedBand = 0.05;
};

// The rule table itself: a pure function of the six features.
int pi_F_rules(const PhiFVector& f);
int pi_F(const MarkovState& state, const Topology& topology, int ego);

// --- partially-imitable proportional controller -----------------------------

struct ProportionalParams {
  double gain = 0.25;          // per track unit
  double safe_distance = 4.0;  // d_safe
  int conflict_vehicles = 2;   // vehicles considered per conflict branch
  double horizon = RuleTable::kHorizon;
  double commit = RuleTable::kCommit;
  double min_speed = 0.1;  // floor used in arrival-time estimates
  double exit_clearance = 3.0;
  double spill_clearance = 6.0;
};

// Index of the level closest to `delta`; equidistant levels resolve to the
// lower index.
int nearest_action(double delta, const ActionSpace& action_space = ActionSpace::standard());

// The effective gap the controller regulates, before clamping.
double pi_P_effective_gap(const MarkovState& state, const Topology& topology, int ego,
                          const ProportionalParams& params = {}, const SimParams& sim = {});
// Commanded speed clamp(K_p (d_eff - d_safe), 0, v_max).
double pi_P_target_speed(double effective_gap, const ProportionalParams& params = {}, const SimParams& sim = {});
int pi_P(const MarkovState& state, const Topology& topology, int ego, const ProportionalParams& params = {},
         const SimParams& sim = {});

// --- egocentric geometry baseline ------------------------------------------

// For the k nearest other vehicles by planar distance: radius, bearing
// relative to the ego heading, relative velocity along the ego->agent ray,
// and heading relative to the ego heading. Missing agents are padded with
// (max loop length, 0, 0, 0).
std::vector<double> phi_naive(const MarkovState& state, const Topology& topology, int ego, int k);
std::vector<std::string> phi_naive_names(int k);

// --- policy catalogue -------------------------------------------------------

enum class PolicyKind { FullyImitable, PartiallyImitable, TreeModel, Random, MaxBrake };

std::string to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& s);

Policy fully_imitable_policy();
Policy partially_imitable_policy(ProportionalParams params = {});
// Uniform over the five actions, a pure function of (seed, time, ego).
Policy random_policy(std::uint64_t seed);
Policy max_brake_policy();

}  // namespace i2l
