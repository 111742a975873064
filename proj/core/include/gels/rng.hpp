#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace gels {

// Mixes a 64-bit value into a well-distributed one (splitmix64 finalizer).
// Used for seeding and for deriving independent sub-streams.
std::uint64_t mix64(std::uint64_t x);

// xoshiro256++ generator.  We carry our own generator instead of <random>
// because every run in this project must reproduce bit-for-bit from its
// seed, and the standard library distributions are not portable across
// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform double in [0, 1) with 53 bits of precision.
  double uniform();

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi);

  // Uniform integer in [0, n).  n must be > 0.
  std::uint64_t below(std::uint64_t n);

  // Derives an independent generator for the given stream id.
  Rng split(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::vector<T>& items) {
    if (items.size() < 2) return;
    for (std::size_t i = items.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(below(i + 1));
      using std::swap;
      swap(items[i], items[j]);
    }
  }

 private:
  std::uint64_t state_[4];
};

}  // namespace gels
