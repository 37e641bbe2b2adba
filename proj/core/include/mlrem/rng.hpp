#pragma once

#include <cstdint>

namespace mlrem {

/// Counter-based pseudo-random generator.
///
/// Each draw hashes (key, counter) through a SplitMix64-style finalizer, so a
/// stream is a pure function of its key and position.  Per-trial streams are
/// derived as hash(master_seed, stream_index), which keeps parallel trials
/// reproducible regardless of scheduling.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  /// Derives an independent stream for (master_seed, stream_index).
  static CounterRng stream(std::uint64_t master_seed, std::uint64_t stream_index);

  std::uint64_t next_u64();

  /// Uniform double in the open interval (0, 1).
  double next_uniform();

  /// Standard normal via Box-Muller (pairs cached).
  double next_gaussian();

  /// Uniform double in [lo, hi).
  double next_uniform(double lo, double hi);

  /// Component label in {1, 2} with P[1] = p1.
  int next_label(double p1);

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer; a bijective 64-bit mix with full avalanche.
std::uint64_t mix64(std::uint64_t z);

}  // namespace mlrem
