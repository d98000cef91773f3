#pragma once

// Seeded random streams.
//
// Every generator is a std::mt19937_64 whose seed is derived as
//   splitmix64(seed ^ splitmix64(stream_id))
// so that independent parts of a simulation (noise matrix, spike basis,
// mean-shift directions, memberships, knockoffs) draw from separate streams
// of one user seed. Normal variates come from std::normal_distribution
// (Marsaglia polar method in libstdc++); streams are bit-reproducible for a
// given build, not across standard libraries.

#include <cstdint>
#include <random>

namespace mspca {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Order-sensitive combination of 64-bit words into one seed.
inline constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t word) {
  return splitmix64(seed ^ (word + 0x9E3779B97F4A7C15ULL + (seed << 6) + (seed >> 2)));
}

/// Named sub-streams used by the simulators and MS-PCA.
enum class Stream : std::uint64_t {
  noise = 1,
  spike_basis = 2,
  directions = 3,
  membership = 4,
  covariance_shift = 5,
  knockoff = 6,
  solver_start = 7,
};

class Rng {
 public:
  using engine_type = std::mt19937_64;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream `id` of `seed`.
  static Rng stream(std::uint64_t seed, std::uint64_t id) {
    return Rng(splitmix64(seed ^ splitmix64(id)));
  }
  static Rng stream(std::uint64_t seed, Stream id) {
    return stream(seed, static_cast<std::uint64_t>(id));
  }

  double normal() { return normal_(engine_); }

  /// Uniform on [0, 1).
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  /// +1 or -1 with equal probability.
  double rademacher() { return (engine_() >> 63) != 0U ? 1.0 : -1.0; }

  std::uint64_t next_u64() { return engine_(); }

  engine_type& engine() { return engine_; }

 private:
  engine_type engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace mspca
