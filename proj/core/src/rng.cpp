#include "mlrem/rng.hpp"

#include <cmath>

namespace mlrem {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

CounterRng CounterRng::stream(std::uint64_t master_seed, std::uint64_t stream_index) {
  return CounterRng(mix64(master_seed ^ mix64(stream_index + 0xD1B54A32D192ED03ULL)));
}

std::uint64_t CounterRng::next_u64() {
  return mix64(key_ + 0x9E3779B97F4A7C15ULL * ++counter_);
}

double CounterRng::next_uniform() {
  // 53 mantissa bits, shifted into (0, 1): never returns 0 or 1.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::next_uniform(double lo, double hi) {
  return lo + (hi - lo) * next_uniform();
}

double CounterRng::next_gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = next_uniform();
  const double u2 = next_uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

int CounterRng::next_label(double p1) {
  return next_uniform() < p1 ? 1 : 2;
}

}  // namespace mlrem
