// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dpa {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed of a random substream identified by a root seed and a path of
// indices, e.g. (seed, step, prompt, member). Streams for distinct paths are
// independent of the order in which they are consumed.
inline std::uint64_t substream_seed(std::uint64_t root,
                                    std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(root);
  for (std::uint64_t v : path) h = splitmix64(h ^ splitmix64(v + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng substream(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  return Rng(substream_seed(root, path));
}

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Stream tags keep substreams of different subsystems apart.
namespace stream {
inline constexpr std::uint64_t kEnv = 1;
inline constexpr std::uint64_t kInit = 2;
inline constexpr std::uint64_t kSftShuffle = 3;
inline constexpr std::uint64_t kWeakOracle = 4;
inline constexpr std::uint64_t kRlBatch = 5;
inline constexpr std::uint64_t kRlRollout = 6;
}  // namespace stream

}  // namespace dpa
