#pragma once

#include <cstdint>
#include <string_view>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "simsync/types.hpp"

namespace simsync {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a; stable across platforms, unlike std::hash.
inline std::uint64_t tag_hash(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Seed of an independent stream identified by (seed, purpose, a, b).
inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t a = 0,
                                 std::uint64_t b = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ tag_hash(purpose));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x632be59bd9b4e019ULL));
  return h;
}

// Boost's engine and distributions are specified algorithmically, so draws
// are identical on every platform for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::string_view purpose, std::uint64_t a = 0, std::uint64_t b = 0)
      : engine_(stream_seed(seed, purpose, a, b)) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    return boost::random::normal_distribution<double>(mean, stddev)(engine_);
  }
  double uniform(double lo, double hi) {
    if (lo == hi) return lo;
    return boost::random::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  // Inclusive on both ends.
  int uniform_int(int lo, int hi) { return boost::random::uniform_int_distribution<int>(lo, hi)(engine_); }

  Vec3 normal3(double stddev = 1.0) {
    Vec3 v;
    for (int k = 0; k < 3; ++k) v(k) = normal(0.0, stddev);
    return v;
  }

  Mat3 rotation() {
    // Uniform on SO(3) via a normalised Gaussian quaternion.
    Eigen::Quaterniond q(normal(), normal(), normal(), normal());
    q.normalize();
    return q.toRotationMatrix();
  }

  boost::random::mt19937_64& engine() { return engine_; }

 private:
  boost::random::mt19937_64 engine_;
};

}  // namespace simsync
