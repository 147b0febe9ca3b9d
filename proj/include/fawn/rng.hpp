#ifndef FAWN_RNG_HPP
#define FAWN_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>

namespace fawn {

/// splitmix64 generator. The only source of randomness in the project, so
/// datasets and initializations are reproducible from a single seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) from the top 53 bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Plain modulo; the bias is below 2^-50 for the n used here.
  std::uint64_t below(std::uint64_t n) noexcept { return next_u64() % n; }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Standard normal via Box-Muller; consumes two uniforms per call.
  double normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

/// Seed of the i-th child stream: the first splitmix64 output for seed ^ i.
inline std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return Rng(seed ^ index).next_u64();
}

}  // namespace fawn

#endif  // FAWN_RNG_HPP
