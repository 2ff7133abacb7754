#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

#include "lumen/common.hpp"

namespace lumen {

namespace detail {
constexpr std::uint64_t kSeedGamma = 0x9e3779b97f4a7c15ull;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

// Deterministic splitmix64 generator. All randomness in the library flows
// through this type so that results are reproducible across platforms;
// the C++ <random> distributions are implementation-defined and are not used.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += detail::kSeedGamma;
    return detail::mix64(state_);
  }

  // Uniform double in [0, 1).
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw InvalidArgument("uniform_index: n must be positive");
    auto idx = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
    return idx < n ? idx : n - 1;
  }

  // Box-Muller, cosine branch only. One normal deviate per call keeps the
  // draw count predictable, which the dataset manifest relies on.
  double normal(double mean, double stddev) {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

// Stable derivation of child seeds from (master seed, path of indices).
// Used to give every pair/epoch/layer its own stream regardless of scheduling.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = seed;
  for (std::uint64_t v : path) h = detail::mix64(h + detail::kSeedGamma + v);
  return h;
}

namespace seed_tag {
constexpr std::uint64_t kPair = 0x70616972;       // dataset pair generation
constexpr std::uint64_t kEpoch = 0x65706f63;      // per-epoch schedule shuffle
constexpr std::uint64_t kTrainPair = 0x74726e70;  // streaming pairs inside training
constexpr std::uint64_t kInit = 0x696e6974;       // network weight init
}  // namespace seed_tag

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = rng.uniform_index(i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace lumen
