#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace demoval {

// Seeded RNG with fully specified draw algorithms. std::mt19937_64 is
// portable, but std::uniform_int_distribution is implementation-defined,
// so bounded draws are done here with rejection sampling instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_below(std::uint64_t bound);

  // Uniform double in [0,1).
  double uniform01();

  // Uniform ordered k-arrangement of [0,n): k distinct indices where both
  // the subset and its order are uniform (partial Fisher-Yates).
  std::vector<std::size_t> sample_arrangement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 gen_;
};

}  // namespace demoval
