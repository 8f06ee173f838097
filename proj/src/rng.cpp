#include "demoval/rng.hpp"

#include <numeric>
#include <stdexcept>
#include <utility>

namespace demoval {

std::uint64_t Rng::uniform_below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_below: bound == 0");
  // Rejection sampling: accept r >= 2^64 mod bound, then r % bound is
  // exactly uniform.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = gen_();
    if (r >= threshold) return r % bound;
  }
}

double Rng::uniform01() {
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

std::vector<std::size_t> Rng::sample_arrangement(std::size_t n,
                                                 std::size_t k) {
  if (k > n) throw std::invalid_argument("sample_arrangement: k > n");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace demoval
