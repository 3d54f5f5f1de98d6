// Seedable random number generation with a stable, platform-independent stream.
//
// Generator: xoshiro256** (Blackman & Vigna), state seeded by splitmix64.
// Uniform doubles use the top 53 bits: (x >> 11) * 2^-53, giving [0, 1).
// Normals use the Box-Muller transform on two uniforms (the sine branch is
// discarded so every draw consumes exactly two uniforms).
//
// The standard library distributions are deliberately not used: their output
// is implementation-defined, and golden files must be portable.

#ifndef PVN_RNG_HPP_
#define PVN_RNG_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace pvn {

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives a child seed from a parent seed and a path of indices.
///
/// derive_seed(s, {i, j}) is a pure function, so rollout j of policy i gets
/// the same seed no matter how many other rollouts are requested.
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t h = seed;
  std::uint64_t mix = splitmix64(h);
  for (std::uint64_t p : path) {
    std::uint64_t s = mix ^ (p + 0x632BE59BD9B4E019ULL);
    mix = splitmix64(s);
    mix ^= splitmix64(s);
  }
  return mix;
}

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept {
    std::uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Uses Lemire's multiply-shift without rejection;
  /// the bias is below 2^-32 for the n this code base uses.
  std::uint64_t below(std::uint64_t n) noexcept {
    const unsigned __int128 wide = static_cast<unsigned __int128>((*this)()) * n;
    return static_cast<std::uint64_t>(wide >> 64);
  }

  double normal() noexcept {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
};

}  // namespace pvn

#endif  // PVN_RNG_HPP_
