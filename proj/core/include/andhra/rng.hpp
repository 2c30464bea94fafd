#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace andhra {

// xoshiro256** seeded through splitmix64. The raw 64-bit stream, uniform(),
// below() and permutation() are pure integer/IEEE arithmetic and therefore
// identical on every platform; normal() additionally goes through libm.
class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();

  // Unbiased integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  bool bernoulli_half() { return (next_u64() >> 63) != 0; }

  // Standard normal via Box-Muller. The second variate is discarded so the
  // full generator state is the four xoshiro words.
  double normal();

  std::vector<std::size_t> permutation(std::size_t n);

  // Independent generator derived from this one's stream.
  Rng fork();

  State state() const { return state_; }
  void set_state(const State& s);

 private:
  State state_{};
};

}  // namespace andhra
