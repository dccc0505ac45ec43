#include <iostream>

#include "i2l/harness.hpp"

int main() {
  const auto t = i2l::preset_topology('A');
  const auto h = i2l::run_episode(t, i2l::fully_imitable_policy(), 11, 10, 1);
  std::cout << t.name() << ' ' << h.steps() << '\n';
  return h.steps() == 10 ? 0 : 1;
}
