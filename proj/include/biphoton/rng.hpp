#pragma once

#include <cstdint>
#include <random>

namespace biphoton {

/// Derives an independent substream seed from (seed, stream index) with a
/// splitmix64 step. Stream 0, 1, 2, ... give decorrelated engines, so
/// per-point or per-arm generation is deterministic regardless of
/// evaluation order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + (stream + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::mt19937_64 substream_engine(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(derive_seed(seed, stream));
}

}  // namespace biphoton
