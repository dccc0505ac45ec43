#include "i2l/sim.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>

#include <nlohmann/json.hpp>

#include "i2l/error.hpp"

namespace i2l {

ActionSpace::ActionSpace(std::array<double, kSize> levels) : levels_(levels) {
  for (int i = 1; i < kSize; ++i)
    if (!(levels_[i] > levels_[i - 1])) throw ConfigError("action levels must be strictly increasing");
  for (int i = 0; i < kSize; ++i)
    if (levels_[i] != -levels_[kSize - 1 - i]) throw ConfigError("action levels must be symmetric about 0");
  if (levels_[kSize / 2] != 0.0) throw ConfigError("middle action level must be 0");
}

ActionSpace ActionSpace::standard() { return ActionSpace({-0.2, -0.1, 0.0, 0.1, 0.2}); }

double ActionSpace::level(int action) const {
  if (!valid(action)) throw InputError("action index " + std::to_string(action) + " outside 0..4");
  return levels_[action];
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::RanToLimit: return "ran-to-limit";
    case Termination::Collision: return "collision";
    case Termination::Stall: return "stall";
  }
  return "unknown";
}

Termination termination_from_string(const std::string& s) {
  if (s == "ran-to-limit") return Termination::RanToLimit;
  if (s == "collision") return Termination::Collision;
  if (s == "stall") return Termination::Stall;
  throw ConfigError("unknown termination '" + s + "'");
}

namespace {

double wrap_arc(double arc, double length) {
  double r = std::fmod(arc, length);
  if (r < 0.0) r += length;
  if (r >= length) r = 0.0;
  return r;
}

// Distance 0 means "the same spot", which the queries treat as a full lap.
double positive_distance(double d, double length) { return d > 0.0 ? d : length; }

struct Resolved {
  TrackPos pos;
  int self = -1;
};

Resolved resolve(const MarkovState& state, const Topology& topology, const Anchor& anchor) {
  if (const int* v = std::get_if<int>(&anchor)) {
    if (*v < 0 || *v >= state.vehicle_count()) throw InputError("vehicle index out of range");
    return {state.position_of(*v), *v};
  }
  return {topology.endpoint(std::get<JunctionEnd>(anchor)), -1};
}

std::vector<int> neighbours(const MarkovState& state, const Topology& topology, const Anchor& anchor,
                            int count, bool ahead) {
  const Resolved r = resolve(state, topology, anchor);
  const double length = topology.loop_length(r.pos.loop);
  std::vector<std::pair<double, int>> found;
  for (int v = 0; v < state.vehicle_count(); ++v) {
    if (v == r.self || state.vehicles[v].loop != r.pos.loop) continue;
    const double p = state.vehicles[v].position;
    const double d = ahead ? forward_distance(r.pos.arc, p, length) : forward_distance(p, r.pos.arc, length);
    found.emplace_back(positive_distance(d, length), v);
  }
  std::sort(found.begin(), found.end());
  std::vector<int> out;
  for (std::size_t i = 0; i < found.size() && static_cast<int>(i) < count; ++i) out.push_back(found[i].second);
  return out;
}

}  // namespace

MarkovState step(const MarkovState& state, std::span<const int> actions, const Topology& topology,
                 const ActionSpace& action_space, const SimParams& params) {
  if (static_cast<int>(actions.size()) != state.vehicle_count())
    throw InputError("expected one action per vehicle");
  MarkovState next;
  next.time = state.time + 1;
  next.vehicles.reserve(state.vehicles.size());
  for (std::size_t i = 0; i < state.vehicles.size(); ++i) {
    const VehicleState& v = state.vehicles[i];
    const double speed = std::clamp(v.speed + action_space.level(actions[i]) * params.dt, 0.0, params.v_max);
    const double length = topology.loop_length(v.loop);
    next.vehicles.push_back({v.loop, wrap_arc(v.position + speed * params.dt, length), speed});
  }
  return next;
}

std::vector<std::pair<int, int>> detect_collisions(const MarkovState& state, const Topology& topology,
                                                   const SimParams& params) {
  std::vector<std::pair<int, int>> pairs;
  auto add = [&pairs](int i, int k) { pairs.emplace_back(std::min(i, k), std::max(i, k)); };

  std::vector<std::vector<int>> on_loop(topology.loop_count());
  for (int v = 0; v < state.vehicle_count(); ++v) on_loop.at(state.vehicles[v].loop).push_back(v);
  for (int loop = 0; loop < topology.loop_count(); ++loop) {
    auto& ids = on_loop[loop];
    if (ids.size() < 2) continue;
    std::sort(ids.begin(), ids.end(), [&](int x, int y) {
      const double px = state.vehicles[x].position, py = state.vehicles[y].position;
      return px != py ? px < py : x < y;
    });
    const double length = topology.loop_length(loop);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const int back = ids[i];
      const int front = ids[(i + 1) % ids.size()];
      const double gap = forward_distance(state.vehicles[back].position, state.vehicles[front].position, length);
      if (gap < params.vehicle_length) add(back, front);
    }
  }

  auto near = [&](int v, TrackPos end) {
    if (state.vehicles[v].loop != end.loop) return false;
    const double length = topology.loop_length(end.loop);
    const double d = forward_distance(state.vehicles[v].position, end.arc, length);
    return std::min(d, length - d) < params.junction_window;
  };
  for (const Junction& j : topology.junctions()) {
    for (int v = 0; v < state.vehicle_count(); ++v) {
      if (!near(v, j.a)) continue;
      for (int w = 0; w < state.vehicle_count(); ++w)
        if (w != v && near(w, j.b)) add(v, w);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

bool detect_stall(std::span<const MarkovState> window, const SimParams& params) {
  const auto s = static_cast<std::size_t>(params.stall_window);
  if (window.size() < s) return false;
  for (std::size_t i = window.size() - s; i < window.size(); ++i)
    for (const VehicleState& v : window[i].vehicles)
      if (!(v.speed < params.stall_epsilon)) return false;
  return true;
}

std::optional<JunctionEnd> next_junction_ahead(const MarkovState& state, const Topology& topology, int vehicle) {
  if (vehicle < 0 || vehicle >= state.vehicle_count()) throw InputError("vehicle index out of range");
  const VehicleState& v = state.vehicles[vehicle];
  const double length = topology.loop_length(v.loop);
  std::optional<JunctionEnd> best;
  double best_d = 0.0;
  for (const LoopEndpoint& e : topology.endpoints_on(v.loop)) {
    const double d = positive_distance(forward_distance(v.position, e.arc, length), length);
    if (!best || d < best_d) {
      best = e.end;
      best_d = d;
    }
  }
  return best;
}

std::optional<int> next_vehicle_ahead(const MarkovState& state, const Topology& topology, Anchor anchor) {
  auto v = neighbours(state, topology, anchor, 1, true);
  if (v.empty()) return std::nullopt;
  return v.front();
}

std::optional<int> next_vehicle_behind(const MarkovState& state, const Topology& topology, Anchor anchor) {
  auto v = neighbours(state, topology, anchor, 1, false);
  if (v.empty()) return std::nullopt;
  return v.front();
}

std::vector<int> vehicles_ahead(const MarkovState& state, const Topology& topology, Anchor anchor, int count) {
  return neighbours(state, topology, anchor, count, true);
}

std::vector<int> vehicles_behind(const MarkovState& state, const Topology& topology, Anchor anchor, int count) {
  return neighbours(state, topology, anchor, count, false);
}

namespace {

bool near_endpoint(const Topology& topology, int loop, double arc, double clearance) {
  const double length = topology.loop_length(loop);
  for (const LoopEndpoint& e : topology.endpoints_on(loop)) {
    const double fwd = forward_distance(arc, e.arc, length);
    if (std::min(fwd, length - fwd) < clearance) return true;
  }
  return false;
}

}  // namespace

MarkovState initial_state(const Topology& topology, int n_vehicles, std::uint64_t seed, const SimParams& params) {
  if (n_vehicles < 0) throw ConfigError("vehicle count must be non-negative");
  std::mt19937_64 rng(seed);
  // [0, 1) from one 64-bit draw, spelled out so placement does not depend on
  // the standard library's distribution algorithm
  auto unit = [&rng] { return std::min(static_cast<double>(rng()) * 0x1.0p-64, 0x1.fffffffffffffp-1); };
  const double total = topology.total_length();
  constexpr int kRestarts = 200;
  constexpr int kTries = 500;
  for (int restart = 0; restart < kRestarts; ++restart) {
    MarkovState s;
    bool ok = true;
    for (int i = 0; i < n_vehicles && ok; ++i) {
      ok = false;
      for (int t = 0; t < kTries; ++t) {
        double u = unit() * total;
        int loop = 0;
        while (loop + 1 < topology.loop_count() && u >= topology.loop_length(loop)) {
          u -= topology.loop_length(loop);
          ++loop;
        }
        const double arc = wrap_arc(u, topology.loop_length(loop));
        if (near_endpoint(topology, loop, arc, params.spawn_clearance)) continue;
        s.vehicles.push_back({loop, arc, 0.0});
        if (detect_collisions(s, topology, params).empty()) {
          ok = true;
          break;
        }
        s.vehicles.pop_back();
      }
    }
    if (ok) return s;
  }
  throw ConfigError("cannot place " + std::to_string(n_vehicles) + " vehicles on topology '" +
                    topology.name() + "' without overlap");
}

EpisodeHistory run_episode(const Topology& topology, const Policy& policy, int n_vehicles, int max_steps,
                           std::uint64_t seed, const ActionSpace& action_space, const SimParams& params) {
  EpisodeHistory h;
  h.seed = seed;
  h.records.push_back({initial_state(topology, n_vehicles, seed, params), {}});
  int still = 0;
  for (int t = 0; t < max_steps; ++t) {
    const MarkovState& current = h.records.back().state;
    std::vector<int> actions(current.vehicles.size());
    for (int v = 0; v < current.vehicle_count(); ++v) {
      actions[v] = policy(current, topology, v);
      if (!ActionSpace::valid(actions[v])) throw InputError("policy returned an action outside 0..4");
    }
    MarkovState next = step(current, actions, topology, action_space, params);
    h.records.back().actions = std::move(actions);
    h.records.push_back({std::move(next), {}});

    const MarkovState& s = h.records.back().state;
    if (!detect_collisions(s, topology, params).empty()) {
      h.termination = Termination::Collision;
      return h;
    }
    const bool all_still = std::all_of(s.vehicles.begin(), s.vehicles.end(),
                                       [&](const VehicleState& v) { return v.speed < params.stall_epsilon; });
    still = all_still ? still + 1 : 0;
    if (still >= params.stall_window) {
      h.termination = Termination::Stall;
      return h;
    }
  }
  h.termination = Termination::RanToLimit;
  return h;
}

void write_episode_log(const EpisodeHistory& history, const std::string& topology_name, std::ostream& out) {
  for (std::size_t i = 0; i < history.records.size(); ++i) {
    const StepRecord& r = history.records[i];
    nlohmann::json line;
    line["t"] = r.state.time;
    nlohmann::json vehicles = nlohmann::json::array();
    for (const VehicleState& v : r.state.vehicles) vehicles.push_back({v.loop, v.position, v.speed});
    line["vehicles"] = std::move(vehicles);
    line["actions"] = r.actions;
    if (i == 0) {
      line["seed"] = history.seed;
      line["topology"] = topology_name;
    }
    if (i + 1 == history.records.size()) line["termination"] = to_string(history.termination);
    out << line.dump() << '\n';
  }
}

EpisodeHistory read_episode_log(std::istream& in) {
  EpisodeHistory h;
  std::string text;
  bool terminated = false;
  while (std::getline(in, text)) {
    if (text.empty()) continue;
    if (terminated) throw ConfigError("episode log has records after its termination record");
    try {
      const auto line = nlohmann::json::parse(text);
      StepRecord r;
      r.state.time = line.at("t").get<std::int64_t>();
      for (const auto& v : line.at("vehicles"))
        r.state.vehicles.push_back({v.at(0).get<int>(), v.at(1).get<double>(), v.at(2).get<double>()});
      r.actions = line.at("actions").get<std::vector<int>>();
      if (line.contains("seed")) h.seed = line["seed"].get<std::uint64_t>();
      if (line.contains("termination")) {
        h.termination = termination_from_string(line["termination"].get<std::string>());
        terminated = true;
      }
      h.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed episode log line: ") + e.what());
    }
  }
  if (!terminated) throw ConfigError("episode log has no termination record");
  return h;
}

}  // namespace i2l
