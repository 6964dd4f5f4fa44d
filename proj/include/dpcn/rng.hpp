#pragma once

#include <cstdint>
#include <random>

namespace dpcn {

// splitmix64 mix of (master, stream) so subsystems get decorrelated
// generators from one master seed.
inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::uint64_t stream = 0) {
  return std::mt19937_64(split_seed(master, stream));
}

}  // namespace dpcn
