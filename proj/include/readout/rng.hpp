#pragma once

#include <cstdint>
#include <vector>

namespace readout {

/// Counter-based generator built on the splitmix64 mixing function.
/// Each (seed, stream) pair is an independent sequence addressed purely by
/// the call counter, so trial i of a Monte Carlo run draws identical numbers
/// no matter how trials are scheduled across threads.
class CounterRng {
 public:
  static constexpr const char* kName = "splitmix64";

  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : base_(mix(seed ^ mix(stream ^ 0x6a09e667f3bcc909ULL))) {}

  std::uint64_t next_u64() {
    return mix(base_ + (++counter_) * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Index sampled proportionally to the nonnegative weights.
  int categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t base_;
  std::uint64_t counter_ = 0;
};

}  // namespace readout
