#pragma once

#include <cstdint>

namespace mq {

// Counter-based generator (splitmix64 finalizer applied to a keyed counter).
// Streams derived from (seed, stream) are independent, so per-path sampling
// is reproducible regardless of scheduling or thread count.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(seed ^ mix(stream * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL))),
        counter_(0) {}

  std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  // Uniform double in [0, 1).
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  // Uniform double in (0, 1): quantile levels must avoid the endpoints.
  double next_level() {
    double u = next_double();
    return u > 0.0 ? u : 0x1.0p-53;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace mq
