#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace lca {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_name(std::string_view name) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Named seed derivation: every random stream in the toolkit is a pure function
// of (root seed, purpose, indices), so results never depend on scheduling order.
std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose,
                          std::initializer_list<std::uint64_t> indices = {});

// xoshiro256** generator with portable distributions, so streams are identical
// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  // Uniform on [0, 1).
  double uniform();
  // Uniform on [lo, hi]; hi is reachable only through rounding, density is uniform.
  double uniform(double lo, double hi);
  // Uniform integer on the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Uniform index in [0, n); n must be positive.
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }
  double normal();

 private:
  std::uint64_t s_[4];
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace lca
