#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace lb {

// xoshiro256++ with splitmix64 seeding. Distributions are hand-rolled so
// streams are bit-identical across platforms and serializable as 4 words.
class Rng {
 public:
  explicit Rng(uint64_t seed) { reseed(seed); }

  // Derives an independent stream from (seed, tag words). Used to make
  // training noise stateless: every draw site keys its own stream.
  static Rng stream(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    Rng r(seed);
    r.mix(a);
    r.mix(b);
    r.mix(c);
    return r;
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform in [0,1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; draws two uniforms per call, no cached spare.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  void fill_normal(double* out, size_t n, double stddev = 1.0) {
    for (size_t i = 0; i + 1 < n; i += 2) {
      double u1 = uniform();
      while (u1 <= 0.0) u1 = uniform();
      const double u2 = uniform();
      const double r = std::sqrt(-2.0 * std::log(u1)) * stddev;
      const double a = 6.283185307179586476925287 * u2;
      out[i] = r * std::cos(a);
      out[i + 1] = r * std::sin(a);
    }
    if (n % 2 != 0) out[n - 1] = normal() * stddev;
  }

  uint64_t below(uint64_t n) { return next_u64() % n; }

  // Fisher-Yates over [0, n)
  std::vector<uint32_t> permutation(uint32_t n) {
    std::vector<uint32_t> p(n);
    for (uint32_t i = 0; i < n; ++i) p[i] = i;
    for (uint32_t i = n; i > 1; --i) {
      const uint32_t j = static_cast<uint32_t>(below(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

  void save(uint64_t out[4]) const {
    for (int i = 0; i < 4; ++i) out[i] = s_[i];
  }
  void restore(const uint64_t in[4]) {
    for (int i = 0; i < 4; ++i) s_[i] = in[i];
  }

 private:
  void reseed(uint64_t seed) {
    uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
  }
  void mix(uint64_t v) {
    uint64_t x = s_[3] ^ (v + 0x9e3779b97f4a7c15ULL);
    for (auto& w : s_) w ^= splitmix64(x);
    // one round to diffuse
    next_u64();
  }
  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t s_[4];
};

}  // namespace lb
