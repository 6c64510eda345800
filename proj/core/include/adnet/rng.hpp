#pragma once

#include <cstdint>
#include <random>

namespace adnet {

// splitmix64 finalizer; used to derive independent sub-seeds from one
// master seed so experiment arms get decorrelated streams.
inline uint64_t mix_seed(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  return mix_seed(a ^ mix_seed(b));
}

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

inline std::mt19937_64 make_rng(uint64_t seed) {
  return std::mt19937_64(seed);
}

}  // namespace adnet
