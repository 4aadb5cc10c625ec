#pragma once

#include <cstdint>
#include <random>

namespace crowdteacher {

// SplitMix64 mixing step.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives the seed of an independent stream from a base seed and a stream
// tag. Every component that owns randomness seeds its own stream this way,
// so results do not depend on the order in which components consume draws.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ (splitmix64(stream) | 1ULL));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

}  // namespace crowdteacher
