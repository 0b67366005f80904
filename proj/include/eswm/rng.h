#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace eswm {

using Rng = std::mt19937_64;

// SplitMix64 finalizer. Used to turn (root seed, stream tag) into
// statistically independent child seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a, for naming seed streams ("env", "bank", "query", "init", ...).
constexpr std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Child seed for a named stream. derive_seed(root, "env") never depends on
/// how many other streams exist, so changing one stream leaves the rest intact.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
  return mix64(root ^ mix64(hash_tag(tag)));
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return mix64(root ^ mix64(index + 0x632be59bd9b4e019ULL));
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace eswm
