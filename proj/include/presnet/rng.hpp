#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace presnet {

/// Deterministic counter-based random stream (SplitMix64 core).
/// Equal seeds give equal draw sequences on every platform; no global state.
/// Single-owner by convention: parallel code derives independent child
/// streams instead of sharing one.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) noexcept : seed_(seed), state_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept {
    state_ += 0x9E3779B97F4A7C15ull;
    return mix(state_);
  }

  /// Uniform on [0,1) with 53 random mantissa bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform on [lo,hi).
  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
  }

  /// Unbiased draw in [0,n); rejection sampling, n >= 1.
  std::uint64_t bounded(std::uint64_t n) noexcept {
    const std::uint64_t threshold = (~n + 1) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  /// Derived stream; depends only on this stream's seed and the label,
  /// not on how many draws the parent has made.
  RngStream child(std::uint64_t label) const noexcept {
    return RngStream(mix(seed_ ^ mix(label + 0x632BE59BD9B4E019ull)));
  }

  /// Fisher-Yates shuffle, deterministic per stream state.
  template <class T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace presnet
