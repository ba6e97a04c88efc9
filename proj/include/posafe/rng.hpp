#pragma once

#include <cstdint>

namespace posafe {

/// SplitMix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based seed splitter: every (stream, index) pair under one root
/// seed maps to an independent 64-bit seed.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(splitmix64(root) ^ stream) + index);
}

namespace stream {
inline constexpr std::uint64_t kTrainEpisodes = 1;
inline constexpr std::uint64_t kTestEpisodes = 2;
inline constexpr std::uint64_t kInit = 3;
inline constexpr std::uint64_t kShuffle = 4;
inline constexpr std::uint64_t kGumbel = 5;
inline constexpr std::uint64_t kNoise = 6;
inline constexpr std::uint64_t kExtensions = 7;
inline constexpr std::uint64_t kGradCheck = 8;
}  // namespace stream

}  // namespace posafe
