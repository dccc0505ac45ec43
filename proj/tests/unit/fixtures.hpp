#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "i2l/sim.hpp"
#include "i2l/topology.hpp"

namespace fixtures {

// Two 60-unit circles crossing twice. Loop 0 meets the junctions at arcs 25
// (junction 0) and 50 (junction 1); loop 1 at arcs 25 and 0.
inline i2l::Topology twin60() {
  using std::numbers::pi;
  const double r = 60.0 / (2.0 * pi);
  const double c = std::cos(75.0 * pi / 180.0);
  std::vector<i2l::Loop> loops{{60.0, i2l::Embedding::circle({0.0, 0.0}, -225.0 * pi / 180.0)},
                               {60.0, i2l::Embedding::circle({2.0 * r * c, 0.0}, 105.0 * pi / 180.0)}};
  return i2l::Topology("twin60", loops, {{{0, 25.0}, {1, 25.0}}, {{0, 50.0}, {1, 0.0}}});
}

// A single 60-unit loop without junctions.
inline i2l::Topology solo60() {
  return i2l::Topology("solo60", {{60.0, i2l::Embedding::circle({0.0, 0.0}, 0.0)}}, {});
}

inline i2l::MarkovState state(std::vector<i2l::VehicleState> v) {
  i2l::MarkovState s;
  s.vehicles = std::move(v);
  return s;
}

}  // namespace fixtures
