#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace dncf {

// Reproducible random stream.
//
// The bit generator is std::mt19937_64, whose output sequence is fixed by the
// C++ standard. The standard distributions are not (their algorithms are
// implementation-defined), so every derived variate is computed here:
//
//   uniform()        53 high bits of one draw, scaled to [0, 1)
//   uniform_index(n) rejection sampling on the low residue, unbiased
//   normal()         Box-Muller on two uniforms; the sine branch is cached
//                    and returned by the following call
//
// Two SeededRng with the same seed therefore produce the same stream on every
// platform and standard library.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64 finalizer; derives independent child seeds (per epoch, per run).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace dncf
