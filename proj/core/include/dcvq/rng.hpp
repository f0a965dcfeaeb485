#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace dcvq {

// SplitMix64 (Steele, Lea & Flood; the java.util.SplittableRandom mixer).
// Chosen because the algorithm is tiny and fully pinned down: every stream a
// given seed produces is reproducible across platforms and implementations.
// All randomness in this project (synthetic data, sampling, init, shuffles)
// flows through this generator.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n); n must be > 0. Plain modulo: the bias is negligible for
  // the small ranges used here and the result is trivially reproducible.
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller; always consumes exactly two draws.
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Child generator seeded from this stream (advances this stream by one).
  SplitMix64 split() { return SplitMix64(next_u64()); }

  // Finalizer-based combine of two words; used to derive named substreams.
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Pure derivation of a substream from this generator's current state and a
  // list of tag words; does not advance this stream.
  SplitMix64 derive(std::initializer_list<std::uint64_t> parts) const {
    std::uint64_t s = state_;
    for (std::uint64_t p : parts) s = mix(s, p);
    return SplitMix64(s);
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace dcvq
