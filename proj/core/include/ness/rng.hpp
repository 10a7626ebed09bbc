#pragma once

#include <cstdint>
#include <random>

namespace ness {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; decorrelates seeds derived from consecutive inputs.
constexpr std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Independent stream seed for (purpose, index) under one master seed.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t purpose,
                                    std::uint64_t index = 0) {
  return mix_seed(mix_seed(mix_seed(master) ^ purpose) + index);
}

// Stream identifiers used by the run harness.
enum class Stream : std::uint64_t {
  kInit = 1,
  kPairSampler = 2,
  kDiagonalSampler = 3,
  kNoise = 4,
  kPretrain = 5,
};

constexpr std::uint64_t derive_seed(std::uint64_t master, Stream purpose,
                                    std::uint64_t index = 0) {
  return derive_seed(master, static_cast<std::uint64_t>(purpose), index);
}

inline int uniform_int(Rng& rng, int n) {
  return std::uniform_int_distribution<int>(0, n - 1)(rng);
}

inline double uniform_real(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace ness
