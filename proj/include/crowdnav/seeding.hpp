#pragma once

#include <cstdint>

namespace crowdnav {

/// splitmix64 finaliser.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return splitmix64(splitmix64(a) ^ b); }

constexpr std::uint64_t kTrainingSeedBit = 1ULL << 63;

/// Training episodes always have the top bit set; evaluation suites use
/// seeds below 2^63, so the two never overlap.
constexpr std::uint64_t training_episode_seed(std::uint64_t base, std::uint64_t env, std::uint64_t episode) {
  return mix_seed(mix_seed(base, env), episode) | kTrainingSeedBit;
}

constexpr bool is_training_seed(std::uint64_t seed) { return (seed & kTrainingSeedBit) != 0; }

}  // namespace crowdnav
