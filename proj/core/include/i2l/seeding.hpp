#pragma once

#include <cstdint>

namespace i2l {

// splitmix64 finaliser. Used to derive independent, order-free seeds for
// episodes and for the counter-based random policy.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                    std::uint64_t index = 0) {
  return mix64(mix64(base ^ mix64(stream)) + index);
}

}  // namespace i2l
