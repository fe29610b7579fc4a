#ifndef MTPP_RNG_HPP
#define MTPP_RNG_HPP

#include <cmath>
#include <cstdint>

namespace mtpp {

// Counter-based uniform generator (splitmix64). Each stream is keyed by
// (global seed, iteration, episode, role), so parallel rollouts draw from
// independent streams and reruns are bit-identical regardless of thread
// count or scheduling.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t key) : state_(key) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1), 53-bit resolution.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Exponential with the given rate, by inversion.
  double next_exponential(double rate) { return -std::log1p(-next_unit()) / rate; }

  bool next_bernoulli(double p) { return next_unit() < p; }

  // Uniform index in [0, n).
  int next_index(int n) {
    return static_cast<int>(next_unit() * static_cast<double>(n)) % n;
  }

 private:
  std::uint64_t state_;
};

namespace stream_role {
inline constexpr std::uint64_t kActionTimes = 1;
inline constexpr std::uint64_t kMarks = 2;
inline constexpr std::uint64_t kEnvironment = 3;
inline constexpr std::uint64_t kReward = 4;
}  // namespace stream_role

// Hash-mixes the key components; collision-free enough for stream separation.
inline std::uint64_t derive_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                std::uint64_t c) {
  auto mix = [](std::uint64_t h, std::uint64_t x) {
    h ^= x + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    std::uint64_t z = h;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed, a), b), c);
}

}  // namespace mtpp

#endif
