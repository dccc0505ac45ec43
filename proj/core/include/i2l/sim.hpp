#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "i2l/topology.hpp"

namespace i2l {

// Kinematic and failure constants shared by the simulator and the policies.
struct SimParams {
  double dt = 1.0;
  double v_max = 1.0;
  double vehicle_length = 2.0;
  double junction_window = 2.0;
  double stall_epsilon = 1e-6;
  int stall_window = 20;
  // Minimum circular distance from any junction endpoint at placement.
  double spawn_clearance = 3.0;
};

// Five acceleration levels, strictly increasing, symmetric, middle exactly 0.
class ActionSpace {
 public:
  static constexpr int kSize = 5;

  explicit ActionSpace(std::array<double, kSize> levels);
  static ActionSpace standard();  // {-0.2, -0.1, 0, +0.1, +0.2}

  double level(int action) const;
  const std::array<double, kSize>& levels() const { return levels_; }
  static bool valid(int action) { return action >= 0 && action < kSize; }

 private:
  std::array<double, kSize> levels_;
};

struct VehicleState {
  int loop = 0;
  double position = 0.0;
  double speed = 0.0;

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct MarkovState {
  std::vector<VehicleState> vehicles;
  std::int64_t time = 0;

  int vehicle_count() const { return static_cast<int>(vehicles.size()); }
  TrackPos position_of(int v) const { return {vehicles[v].loop, vehicles[v].position}; }
  friend bool operator==(const MarkovState&, const MarkovState&) = default;
};

enum class Termination { RanToLimit, Collision, Stall };

std::string to_string(Termination t);
Termination termination_from_string(const std::string& s);

// One record per visited state. `actions` is the joint action taken in that
// state, and is empty on the final record of an episode.
struct StepRecord {
  MarkovState state;
  std::vector<int> actions;
};

struct EpisodeHistory {
  std::vector<StepRecord> records;
  Termination termination = Termination::RanToLimit;
  std::uint64_t seed = 0;

  // Number of steps actually simulated.
  int steps() const { return static_cast<int>(records.size()) - 1; }
};

// Per-vehicle controller. Must be deterministic in its arguments.
using Policy = std::function<int(const MarkovState&, const Topology&, int ego)>;

// Advances every vehicle one step. Throws InputError on a bad action index
// or a mismatched action count.
MarkovState step(const MarkovState& state, std::span<const int> actions, const Topology& topology,
                 const ActionSpace& action_space, const SimParams& params = {});

// Pairs (i < j) that are in collision: same-loop gap below the vehicle
// length, or one vehicle inside each window of the same junction.
std::vector<std::pair<int, int>> detect_collisions(const MarkovState& state, const Topology& topology,
                                                   const SimParams& params = {});

// True iff the window holds at least `stall_window` states and every vehicle
// is below `stall_epsilon` in each of the last `stall_window` of them.
bool detect_stall(std::span<const MarkovState> window, const SimParams& params = {});

// Nearest junction endpoint strictly ahead of the vehicle on its own loop.
std::optional<JunctionEnd> next_junction_ahead(const MarkovState& state, const Topology& topology,
                                               int vehicle);

// Anchor for the neighbour queries: a vehicle index or a junction endpoint.
using Anchor = std::variant<int, JunctionEnd>;

// Nearest other vehicle strictly ahead of (behind) the anchor on the
// anchor's loop. Equal distances resolve to the lower vehicle index.
std::optional<int> next_vehicle_ahead(const MarkovState& state, const Topology& topology, Anchor anchor);
std::optional<int> next_vehicle_behind(const MarkovState& state, const Topology& topology, Anchor anchor);

// Same as above but returns up to `count` vehicles, nearest first.
std::vector<int> vehicles_ahead(const MarkovState& state, const Topology& topology, Anchor anchor,
                                int count);
std::vector<int> vehicles_behind(const MarkovState& state, const Topology& topology, Anchor anchor,
                                 int count);

// Random non-overlapping placement at rest, clear of junction endpoints by
// `spawn_clearance`. Throws ConfigError when the
// vehicles cannot be placed after bounded retries.
MarkovState initial_state(const Topology& topology, int n_vehicles, std::uint64_t seed,
                          const SimParams& params = {});

EpisodeHistory run_episode(const Topology& topology, const Policy& policy, int n_vehicles, int max_steps,
                           std::uint64_t seed, const ActionSpace& action_space = ActionSpace::standard(),
                           const SimParams& params = {});

// JSON-lines episode log: one object per record, termination on the last.
void write_episode_log(const EpisodeHistory& history, const std::string& topology_name, std::ostream& out);
EpisodeHistory read_episode_log(std::istream& in);

}  // namespace i2l
