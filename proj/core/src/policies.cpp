#include "i2l/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "i2l/error.hpp"
#include "i2l/seeding.hpp"

namespace i2l {

const std::array<std::string_view, kPhiFSize>& phi_F_expressions() {
  static const std::array<std::string_view, kPhiFSize> exprs = {
      "speed(ego)",
      "sep(pos(fj(ego)),pos(ego))",
      "sep(pos(twin(fj(ego))),pos(ba(twin(fj(ego)))))",
      "sub(sep(pos(fj(ego)),pos(ego)),sep(pos(twin(fj(ego))),pos(ba(twin(fj(ego))))))",
      "sub(speed(ego),speed(ba(twin(fj(ego)))))",
      "sep(pos(fa(ego)),pos(ego))",
  };
  return exprs;
}

FeatureSet phi_F_set() {
  FeatureSet set;
  for (std::string_view e : phi_F_expressions()) set.features.push_back(FeatureExpr::parse(e));
  for (const FeatureExpr& f : set.features) set.depth = std::max(set.depth, f.depth());
  return set;
}

PhiFVector phi_F(const MarkovState& state, const Topology& topology, int ego) {
  static const FeatureProgram program(phi_F_set());
  PhiFVector out{};
  program.evaluate(state, topology, ego, out);
  return out;
}

int pi_F_rules(const PhiFVector& f) {
  using R = RuleTable;
  const double v = f[kEgoSpeed];
  const double d = f[kJunctionGap];
  const double g = f[kLeaderGap];

  if (g < R::kFollowBrake) return kBrakeHard;

  if (d >= R::kCommit) {
    const double dd = f[kGapDifference];
    const double dv = f[kSpeedDifference];
    bool rival_first;
    if (dd > R::kGapBand)
      rival_first = true;
    else if (dd < -R::kGapBand)
      rival_first = false;
    else if (dv < -R::kSpeedBand)
      rival_first = true;
    else if (dv > R::kSpeedBand)
      rival_first = false;
    else
      rival_first = dd >= 0.0;

    // a rival inside the commit zone always has the junction
    if (f[kRivalGap] < R::kCommit) rival_first = true;
    const bool contest = d < R::kHorizon && f[kRivalGap] < R::kHorizon && rival_first;
    // don't enter a junction whose exit is blocked by the leader
    bool spill = false;
    for (double upper = R::kStopZone; upper > R::kCommit; upper -= R::kSpillStep)
      if (d < upper && d >= upper - R::kSpillStep && g < upper + R::kExitRoom) spill = true;
    if (contest || spill) {
      if (d < R::kStopZone) return kBrakeHard;
      if (v > 0.55) return kBrake;
      if (v < 0.25) return kAccel;
      return kHold;
    }
  }

  if (g < R::kFollowEase) {
    if (v > 0.55) return kBrake;
    if (v < 0.35) return kAccel;
    return kHold;
  }
  if (v < 0.55) return kAccelHard;
  if (v < 0.95) return kAccel;
  return kHold;
}

int pi_F(const MarkovState& state, const Topology& topology, int ego) {
  return pi_F_rules(phi_F(state, topology, ego));
}

int nearest_action(double delta, const ActionSpace& action_space) {
  int best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (int a = 0; a < ActionSpace::kSize; ++a) {
    const double err = std::abs(action_space.level(a) - delta);
    // 1e-9 absorbs rounding in differences such as 0.45 - 0.6
    if (err < best_err - 1e-9) {
      best = a;
      best_err = err;
    }
  }
  return best;
}

double pi_P_effective_gap(const MarkovState& state, const Topology& topology, int ego,
                          const ProportionalParams& params, const SimParams& sim) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const VehicleState& me = state.vehicles.at(ego);
  const double length = topology.loop_length(me.loop);

  double leader_gap = kInf;
  if (auto lead = next_vehicle_ahead(state, topology, ego)) {
    leader_gap = forward_distance(me.position, state.vehicles[*lead].position, length);
    if (leader_gap == 0.0) leader_gap = length;
  }
  double d_eff = leader_gap - sim.vehicle_length;

  auto junction = next_junction_ahead(state, topology, ego);
  if (!junction) return d_eff;
  const TrackPos mine = topology.endpoint(*junction);
  const double d = forward_distance(me.position, mine.arc, length);
  if (d < params.commit) return d_eff;

  const JunctionEnd other = junction->twin();
  const TrackPos twin = topology.endpoint(other);
  const double twin_length = topology.loop_length(twin.loop);
  const double my_time = d / std::max(me.speed, params.min_speed);

  bool yield = false;
  // approaching branch: the nearest vehicles behind the twin endpoint
  for (int k : vehicles_behind(state, topology, other, params.conflict_vehicles)) {
    if (k == ego) continue;
    const double c = forward_distance(state.vehicles[k].position, twin.arc, twin_length);
    if (c >= params.horizon) continue;
    const double their_time = c / std::max(state.vehicles[k].speed, params.min_speed);
    if (their_time < my_time || (their_time == my_time && c <= d)) yield = true;
  }
  // exit branch: vehicles that have just crossed from the other side
  for (int k : vehicles_ahead(state, topology, other, params.conflict_vehicles)) {
    if (k == ego) continue;
    const double past = forward_distance(twin.arc, state.vehicles[k].position, twin_length);
    if (past < params.exit_clearance) yield = true;
  }
  if (d < RuleTable::kStopZone && leader_gap - d < params.spill_clearance) yield = true;

  if (yield) d_eff = std::min(d_eff, d - sim.junction_window);
  return d_eff;
}

double pi_P_target_speed(double effective_gap, const ProportionalParams& params, const SimParams& sim) {
  if (effective_gap == std::numeric_limits<double>::infinity()) return sim.v_max;
  return std::clamp(params.gain * (effective_gap - params.safe_distance), 0.0, sim.v_max);
}

int pi_P(const MarkovState& state, const Topology& topology, int ego, const ProportionalParams& params,
         const SimParams& sim) {
  const double target = pi_P_target_speed(pi_P_effective_gap(state, topology, ego, params, sim), params, sim);
  return nearest_action(target - state.vehicles.at(ego).speed);
}

namespace {

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a;
}

}  // namespace

std::vector<double> phi_naive(const MarkovState& state, const Topology& topology, int ego, int k) {
  if (k < 0) throw InputError("k must be non-negative");
  const Point2 p = topology.point(state.position_of(ego));
  const double h = topology.heading(state.position_of(ego));
  const double ve = state.vehicles.at(ego).speed;

  std::vector<std::pair<double, int>> others;
  for (int v = 0; v < state.vehicle_count(); ++v) {
    if (v == ego) continue;
    const Point2 q = topology.point(state.position_of(v));
    others.emplace_back(std::hypot(q.x - p.x, q.y - p.y), v);
  }
  std::sort(others.begin(), others.end());

  std::vector<double> out;
  out.reserve(4 * static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    if (i >= static_cast<int>(others.size())) {
      out.insert(out.end(), {topology.max_loop_length(), 0.0, 0.0, 0.0});
      continue;
    }
    const auto [radius, v] = others[i];
    const Point2 q = topology.point(state.position_of(v));
    const double ho = topology.heading(state.position_of(v));
    const double vo = state.vehicles[v].speed;
    const double bearing = radius > 0.0 ? wrap_angle(std::atan2(q.y - p.y, q.x - p.x) - h) : 0.0;
    double normal = 0.0;
    if (radius > 0.0) {
      const double ux = (q.x - p.x) / radius, uy = (q.y - p.y) / radius;
      const double rvx = vo * std::cos(ho) - ve * std::cos(h);
      const double rvy = vo * std::sin(ho) - ve * std::sin(h);
      normal = rvx * ux + rvy * uy;
    }
    out.insert(out.end(), {radius, bearing, normal, wrap_angle(ho - h)});
  }
  return out;
}

std::vector<std::string> phi_naive_names(int k) {
  std::vector<std::string> names;
  for (int i = 0; i < k; ++i) {
    const std::string idx = "[" + std::to_string(i) + "]";
    names.push_back("naive.radius" + idx);
    names.push_back("naive.angle" + idx);
    names.push_back("naive.normal_velocity" + idx);
    names.push_back("naive.heading" + idx);
  }
  return names;
}

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::FullyImitable: return "pi_F";
    case PolicyKind::PartiallyImitable: return "pi_P";
    case PolicyKind::TreeModel: return "tree";
    case PolicyKind::Random: return "random";
    case PolicyKind::MaxBrake: return "max_brake";
  }
  return "unknown";
}

PolicyKind policy_kind_from_string(const std::string& s) {
  if (s == "pi_F" || s == "fully-imitable") return PolicyKind::FullyImitable;
  if (s == "pi_P" || s == "partially-imitable") return PolicyKind::PartiallyImitable;
  if (s == "tree" || s == "tree-model") return PolicyKind::TreeModel;
  if (s == "random") return PolicyKind::Random;
  if (s == "max_brake") return PolicyKind::MaxBrake;
  throw ConfigError("unknown policy kind '" + s + "'");
}

Policy fully_imitable_policy() {
  return [](const MarkovState& s, const Topology& t, int ego) { return pi_F(s, t, ego); };
}

Policy partially_imitable_policy(ProportionalParams params) {
  return [params](const MarkovState& s, const Topology& t, int ego) { return pi_P(s, t, ego, params); };
}

Policy random_policy(std::uint64_t seed) {
  return [seed](const MarkovState& s, const Topology&, int ego) {
    const std::uint64_t h = derive_seed(seed, static_cast<std::uint64_t>(s.time), static_cast<std::uint64_t>(ego));
    return static_cast<int>(h % ActionSpace::kSize);
  };
}

Policy max_brake_policy() {
  return [](const MarkovState&, const Topology&, int) { return static_cast<int>(kBrakeHard); };
}

}  // namespace i2l
