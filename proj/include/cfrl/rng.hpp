#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace cfrl {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30U)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27U)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31U);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for the named sub-stream `name` (and optional index) of a master
/// seed. Every source of randomness in a run derives from one master seed
/// through this function.
constexpr std::uint64_t substream(std::uint64_t master, std::string_view name,
                                  std::uint64_t index = 0) noexcept {
  return mix64(mix64(master ^ fnv1a(name)) + index);
}

/// Seeds that must survive a round trip through a double (environment
/// internal state vectors) are truncated to 52 bits.
constexpr std::uint64_t exact_seed(std::uint64_t seed) noexcept {
  return seed & ((std::uint64_t{1} << 52U) - 1U);
}

/// Uniform double in [0, 1) from 64 random bits.
constexpr double unit_from_bits(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11U) * 0x1.0p-53;
}

/// Counter-based uniform draw: a pure function of (key, counter).
constexpr double hashed_uniform(std::uint64_t key, std::uint64_t counter) noexcept {
  return unit_from_bits(mix64(mix64(key) ^ mix64(counter + 0x5851f42d4c957f2dULL)));
}

/// Counter-based standard normal (Box-Muller).
inline double hashed_normal(std::uint64_t key, std::uint64_t counter) noexcept {
  const double u1 = 1.0 - hashed_uniform(key, 2 * counter);
  const double u2 = hashed_uniform(key, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace cfrl
