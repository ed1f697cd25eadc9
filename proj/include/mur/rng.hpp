#pragma once

// Seed derivation and samplers whose output is fixed by this code rather than
// by the standard library's distribution implementations, so Monte Carlo runs
// are bit-reproducible across toolchains.

#include <cstdint>
#include <random>
#include <string_view>

namespace mur {

/// Engine used everywhere; recorded in reports.
using Engine = std::mt19937_64;
inline constexpr std::string_view kEngineName = "mt19937_64+splitmix64-seeding";

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a; stable across platforms, unlike std::hash.
constexpr std::uint64_t stable_hash(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  return splitmix64(splitmix64(master) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Per-sample seed from (master seed, item id, sample index).
constexpr std::uint64_t sample_seed(std::uint64_t master, std::string_view item_id,
                                    std::uint64_t sample) noexcept {
  return derive_seed(derive_seed(master, stable_hash(item_id)), sample);
}

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

/// Box-Muller normal sampler that keeps the spare deviate.
class GaussianSampler {
 public:
  double operator()(Engine& engine);

 private:
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mur
