#ifndef RDSLAB_RNG_HPP
#define RDSLAB_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace rds {

// splitmix64; used for seed derivation only, never as the working generator.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash64(std::string_view s) {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives a stage/worker seed from a master seed. Disjoint (stage, index)
// pairs give independent streams, so parallel ensembles stay reproducible
// regardless of scheduling.
inline std::uint64_t seed_for(std::uint64_t master, std::string_view stage,
                              std::uint64_t index = 0) {
  return splitmix64(splitmix64(master ^ hash64(stage)) ^ index);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace rds

#endif
