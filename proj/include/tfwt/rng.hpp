#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace tfwt {

// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Stable per-component seed: FNV-1a of the component name mixed with the run seed.
inline std::uint64_t derive_seed(std::string_view component, std::uint64_t run_seed) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : component) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return mix64(h ^ mix64(run_seed));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  Rng(std::string_view component, std::uint64_t run_seed)
      : engine_(derive_seed(component, run_seed)) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    // Fisher-Yates with our own index draw so the permutation does not depend
    // on the standard library's shuffle implementation.
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace tfwt
