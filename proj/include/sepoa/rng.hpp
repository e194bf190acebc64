#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sepoa {

/// Seeded random source. Every stochastic operation takes one of these by
/// reference so that a run is a pure function of its root seed.
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream from a root seed and a stream name
/// ("env", "teacher", "selection", "init", ...).
inline std::uint64_t stream_seed(std::uint64_t root, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(root ^ splitmix64(h));
}

inline Rng make_stream(std::uint64_t root, std::string_view name) {
  return Rng(stream_seed(root, name));
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

inline bool coin_flip(Rng& rng) { return std::bernoulli_distribution(0.5)(rng); }

}  // namespace sepoa
