#pragma once

#include <cstdint>
#include <cmath>

namespace naseval {

/// SplitMix64 state mixer. Used only to expand seeds into generator state.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// xoshiro256** with explicit (seed, stream) construction.
///
/// Stream recipe: the four state words are the first four outputs of a
/// SplitMix64 chain seeded with `seed XOR (stream * 0x9e3779b97f4a7c15)`.
/// Every experiment seed owns stream 0, 1, 2, ... for its independent
/// purposes (init, batch order, sampling, ...), so runs are reproducible
/// from the seed alone and streams never alias across purposes.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream) {
    SplitMix64 mixer(seed ^ (stream * 0x9e3779b97f4a7c15ULL));
    for (auto& word : state_) word = mixer.next();
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  std::uint64_t next() {
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

  /// Uniform double in [0, 1), 53 random bits.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound). Rejection sampling, no modulo bias.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  /// Standard normal draw. Box-Muller, two uniforms per call, no caching.
  double next_normal() {
    const double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4];
};

// Stream ids, one purpose each. Runs derive every generator they own from
// (run seed, one of these), never by reusing a stream for two purposes.
namespace streams {
inline constexpr std::uint64_t kInit = 0;       // parameter initialization
inline constexpr std::uint64_t kBatchOrder = 1; // epoch shuffling
inline constexpr std::uint64_t kArchSample = 2; // architecture draws
inline constexpr std::uint64_t kNoise = 3;      // noisy oracle draws
inline constexpr std::uint64_t kTaskAutomaton = 10;
inline constexpr std::uint64_t kTaskTrain = 11;
inline constexpr std::uint64_t kTaskValid = 12;
inline constexpr std::uint64_t kTaskTest = 13;
}  // namespace streams

}  // namespace naseval
