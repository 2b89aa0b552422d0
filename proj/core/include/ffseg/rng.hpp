#pragma once

#include <cstdint>

namespace ffseg {

/// Counter-based generator: the i-th draw of stream (seed, stream) is
/// SplitMix64-finalize(seed, stream, i). Identical on every platform, and
/// any stream can be addressed without advancing others.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(Mix(seed ^ Mix(stream + 0x9E3779B97F4A7C15ULL))) {}

  std::uint64_t NextU64() { return Mix(key_ + 0x9E3779B97F4A7C15ULL * ++counter_); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double Uniform() { return static_cast<double>(NextU64() >> 11) * 0x1.0p-53; }
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t Below(std::uint64_t n) { return n == 0 ? 0 : NextU64() % n; }
  /// Standard normal via Box-Muller (one value per call, no caching so the
  /// stream position is a pure function of the number of calls).
  double Normal();
  double Normal(double mean, double stddev) { return mean + stddev * Normal(); }

  static std::uint64_t Mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Stable stream identifiers so that different consumers of one seed never
/// share draws.
namespace streams {
inline constexpr std::uint64_t kSceneLayout = 1;
inline constexpr std::uint64_t kClutter = 2;
inline constexpr std::uint64_t kEdgeBase = 1000;
inline constexpr std::uint64_t kViewBase = 500000;
inline constexpr std::uint64_t kPerturb = 900000;
}  // namespace streams

}  // namespace ffseg
