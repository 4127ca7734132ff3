#ifndef CONCEPTGUARD_RNG_H_
#define CONCEPTGUARD_RNG_H_

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace conceptguard {

// Portable seeded randomness.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The std:: distributions are implementation-defined, so every
// conversion from raw 64-bit words to numbers is done here:
//   - Uniform01: top 53 bits scaled by 2^-53, range [0, 1).
//   - UniformInt(n): rejection sampling on the largest multiple of n below
//     2^64, then modulo. Unbiased and identical on every platform.
//   - Bernoulli(p): Uniform01() < p.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t NextU64() { return engine_(); }
  double Uniform01();
  // Uniform integer in [0, n). n must be positive.
  uint64_t UniformInt(uint64_t n);
  bool Bernoulli(double p) { return Uniform01() < p; }
  // Standard normal via Box-Muller on two Uniform01 draws.
  double Normal();

  // In-place Fisher-Yates shuffle, swapping from the back.
  template <typename T>
  void Shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(UniformInt(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Draws k distinct elements of `pool` (partial Fisher-Yates, front first).
  // The returned order is the draw order.
  std::vector<size_t> SampleWithoutReplacement(size_t pool, size_t k);

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer; used to derive independent stage seeds from one
// master seed.
uint64_t MixSeed(uint64_t seed, uint64_t stream);

}  // namespace conceptguard

#endif  // CONCEPTGUARD_RNG_H_
