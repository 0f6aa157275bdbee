#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace mtmask {

/// Counter-based SplitMix64.
///
/// The i-th draw (i = 1, 2, ...) of a stream with key `seed` is
///
///     z  = seed + i * 0x9E3779B97F4A7C15          (mod 2^64)
///     z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///     z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
///     out = z ^ (z >> 31)
///
/// `uniform()` maps a draw to [0,1) as (out >> 11) * 2^-53. `normal()` uses
/// Box-Muller on two consecutive uniforms, u1 replaced by 1-u1 to avoid
/// log(0), and returns only the cosine branch. `derive(tag)` keys a child
/// stream as mix(seed ^ mix(tag)), so sub-generators never share counters.
/// Everything here is integer or IEEE double arithmetic and reproducible in
/// any language.
class Rng {
public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit constexpr Rng(std::uint64_t seed) noexcept : seed_(seed) {}

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Stateless access to draw `index` (1-based) of this stream.
  constexpr std::uint64_t at(std::uint64_t index) const noexcept {
    return mix(seed_ + index * kGamma);
  }

  constexpr std::uint64_t next() noexcept { return at(++counter_); }

  double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n). Modulo bias is below 2^-40 for n < 2^24.
  std::uint64_t below(std::uint64_t n) noexcept { return n == 0 ? 0 : next() % n; }

  double normal() noexcept {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  constexpr Rng derive(std::uint64_t tag) const noexcept {
    return Rng(mix(seed_ ^ mix(tag + kGamma)));
  }

  constexpr std::uint64_t seed() const noexcept { return seed_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace mtmask
