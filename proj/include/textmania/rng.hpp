#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace textmania {

// All library randomness goes through these helpers instead of the
// std::*_distribution classes, whose output sequences are
// implementation-defined. Given the same engine state the draws below are
// identical on every platform, which is what makes augmentation replays and
// the table builds reproducible byte for byte.

using Rng = std::mt19937_64;

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a, used for seeding per-token generators and for content hashes.
inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64_bytes(const void* data, size_t n,
                              uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derive an independent stream from a base seed, e.g. one per worker or per
// class. splitmix64 decorrelates adjacent ids.
inline Rng derive_rng(uint64_t seed, uint64_t stream_id) {
  return Rng(splitmix64(seed ^ splitmix64(stream_id)));
}

inline double uniform_real(Rng& g) {
  // 53 random bits into [0, 1).
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Uniform over {0, ..., n-1}.
inline uint64_t uniform_index(Rng& g, uint64_t n) {
  uint64_t bound = ~uint64_t{0} - ~uint64_t{0} % n;
  uint64_t r = g();
  while (r >= bound) r = g();
  return r % n;
}

// One standard normal draw via Box-Muller. Stateless (the cosine half only),
// so a draw consumes exactly two engine outputs.
inline double draw_normal(Rng& g) {
  double u1 = uniform_real(g);
  double u2 = uniform_real(g);
  while (u1 <= 0.0) u1 = uniform_real(g);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

template <typename T>
void fisher_yates_shuffle(std::vector<T>& v, Rng& g) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = uniform_index(g, i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace textmania
