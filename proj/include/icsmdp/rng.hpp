#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace icsmdp {

// Deterministic seed derivation.  All randomness in the library flows from a
// root seed split into named substreams so that, e.g., exploration noise can
// never perturb environment dynamics.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_str(std::string_view s) {
  // FNV-1a 64-bit.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Combine a seed with a stream tag and an index into a fresh seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                                 std::uint64_t index = 0) {
  std::uint64_t h = splitmix64(root ^ hash_str(stream));
  return splitmix64(h ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
}

// Value-semantic RNG stream.  Copyable so tests can replay a substream.
class Rng {
 public:
  using result_type = std::mt19937_64::result_type;

  Rng() : engine_(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng substream(std::uint64_t root, std::string_view stream,
                       std::uint64_t index = 0) {
    return Rng(derive_seed(root, stream, index));
  }

  result_type operator()() { return engine_(); }
  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(engine_));
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace icsmdp
