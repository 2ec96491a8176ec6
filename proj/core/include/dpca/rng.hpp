#pragma once

#include <cmath>
#include <cstdint>

namespace dpca {

// Keyed counter generator: draw i of stream k is hash(k, i), so streams
// with distinct keys never share a sequence segment and any draw can be
// produced independently of the others. Keys for (seed, machine) pairs come
// from derive(), which lets partitions for different machines be generated
// concurrently and in any order with identical output.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Hash-derived child stream key; order of arguments matters.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0x6c62272e07bb0142ULL) {
    return mix(mix(seed + 0x9e3779b97f4a7c15ULL * (a + 1)) ^
               (b * 0x100000001b3ULL));
  }

  std::uint64_t next_u64() {
    return mix((counter_++) * 0x9e3779b97f4a7c15ULL ^ key_);
  }

  // Uniform on (0, 1), never exactly 0 or 1.
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; caches the second deviate.
  double next_gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    cached_ = radius * std::sin(angle);
    have_cached_ = true;
    return radius * std::cos(angle);
  }

  double next_rademacher() { return (next_u64() & 1ULL) ? 1.0 : -1.0; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace dpca
