#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace trajsurv {

// All randomness in the project flows through explicitly seeded engines so
// that every command is reproducible bit-for-bit. Sub-streams (per patient,
// per layer, ...) are derived with a splitmix64 hash of (seed, index), which
// keeps streams independent without coupling them to iteration order.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ (0x6a09e667f3bcc909ULL + stream));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    // 53-bit mantissa draw; avoids distribution objects whose state
    // management across calls is easy to get wrong when streams fork.
    const std::uint64_t bits = engine_() >> 11;
    const double u = static_cast<double>(bits) * 0x1.0p-53;
    return lo + u * (hi - lo);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    // Marsaglia polar method with one cached deviate.
    if (has_spare_) {
      has_spare_ = false;
      return mean + stddev * spare_;
    }
    double u, v, s;
    do {
      u = uniform(-1.0, 1.0);
      v = uniform(-1.0, 1.0);
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    has_spare_ = true;
    return mean + stddev * u * scale;
  }

  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }

  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform(0.0, 1.0) * static_cast<double>(n)) % n;
  }

  double exponential(double rate) {
    double u;
    do {
      u = uniform(0.0, 1.0);
    } while (u <= 0.0);
    return -std::log(u) / rate;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.index(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace trajsurv
