#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace tegru {

// Seeded generator with hand-rolled distributions. std::mt19937_64 output
// is pinned by the standard, but the std:: distributions are
// implementation-defined, so uniform/normal/bernoulli are derived from raw
// bits here: same seed, same stream, on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; pairs are consumed together.
  double normal();

  // Uniform integer in [0, n), n > 0.
  std::uint64_t uniform_int(std::uint64_t n);

  // Fisher-Yates; std::shuffle is implementation-defined, this is not.
  template <class T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i + 1));
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tegru
