#pragma once

#include <cstdint>
#include <random>

namespace tvspec {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// splitmix64 output stream (a UniformRandomBitGenerator). Seeding is
/// O(1), unlike mt19937_64, which matters when every index gets its own engine.
class SplitMixEngine {
 public:
  using result_type = std::uint64_t;
  explicit SplitMixEngine(std::uint64_t state) noexcept : state_(state) {}
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }
  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64(state_);
  }

 private:
  std::uint64_t state_;
};

/// Engine whose state depends only on (seed, index, salt), so a generator
/// evaluated at the same index always reproduces the same draws.
inline SplitMixEngine indexed_engine(std::uint64_t seed, std::int64_t index,
                                     std::uint64_t salt = 0) {
  return SplitMixEngine(splitmix64(splitmix64(seed ^ splitmix64(salt)) ^
                                   static_cast<std::uint64_t>(index)));
}

// std::uniform_real_distribution is implementation-defined; convert raw bits
// directly so draws are identical across standard libraries.
inline double unit_uniform(SplitMixEngine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

inline double uniform(SplitMixEngine& engine, double lo, double hi) {
  return lo + (hi - lo) * unit_uniform(engine);
}

}  // namespace tvspec
