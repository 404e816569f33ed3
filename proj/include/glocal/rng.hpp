#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace glocal {

/// xoshiro256** (Blackman & Vigna), state expanded from a 64-bit seed with
/// splitmix64. Normals use the Box-Muller transform without caching the
/// second variate, so a draw sequence depends only on the seed and the number
/// of calls. Identical on every platform.
class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  /// Uniform integer in [0, n); n must be > 0. Unbiased (rejection sampling).
  std::uint64_t uniform_index(std::uint64_t n);
  double normal(double mean = 0.0, double stddev = 1.0);
  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t seed() const { return seed_; }
  const State& state() const { return state_; }
  void set_state(const State& s) { state_ = s; }

  // UniformRandomBitGenerator surface.
  using result_type = std::uint64_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return next_u64(); }

 private:
  std::uint64_t seed_;
  State state_{};
};

std::uint64_t splitmix64(std::uint64_t& x);

/// Per-component seed: splitmix64 of (root ^ fnv1a64(tag)) mixed with index.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0);

}  // namespace glocal
