#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fpath {

// std::mt19937_64 is fully specified by the standard, but the std
// distributions are not. Everything that must reproduce across platforms
// draws through these helpers instead.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, bound) by rejection.
  uint64_t below(uint64_t bound);

  // Box-Muller, one value per call (the sine branch is discarded).
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fpath
