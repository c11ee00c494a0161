#pragma once

#include <cstdint>
#include <cmath>

namespace mftg {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t v, int k) {
  return (v << k) | (v >> (64 - k));
}

}  // namespace detail

// Deterministic keyed random stream (xoshiro256++ seeded via splitmix64).
// A stream is identified by (seed, k0, k1, k2); substreams for rollout,
// iteration or direction indices are derived by key, never by sharing
// generator state, so results do not depend on worker count or evaluation
// order. Gaussians come from Box-Muller with a cached spare, avoiding the
// implementation-defined std::normal_distribution.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t k0 = 0,
                     std::uint64_t k1 = 0, std::uint64_t k2 = 0) {
    std::uint64_t x = seed;
    (void)detail::splitmix64(x);
    x ^= k0 + 0x9e3779b97f4a7c15ULL;
    (void)detail::splitmix64(x);
    x ^= k1 + 0xbf58476d1ce4e5b9ULL;
    (void)detail::splitmix64(x);
    x ^= k2 + 0x94d049bb133111ebULL;
    for (auto& s : state_) s = detail::splitmix64(x);
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  std::uint64_t next() {
    const std::uint64_t result =
        detail::rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl(state_[3], 45);
    return result;
  }

  // Uniform on (0, 1]; strictly positive so log() below is safe.
  double uniform01() {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
  }

  // Marsaglia polar method with a cached spare; avoids trig calls on the
  // simulation hot path.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

 private:
  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mftg
