#pragma once

// Seeded randomness. All draws go through explicit transforms of a
// mt19937_64 stream so that results are reproducible across standard
// libraries; std::*_distribution is never used.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace cpfilter {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from (seed, stream index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream ^ 0x5851f42d4c957f2dULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : engine_(derive_seed(seed, stream)) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1].
  double uniform_pos() { return 1.0 - uniform(); }

  /// Standard normal via Box-Muller (no cached second value).
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer on [0, n), rejection sampled to avoid modulo bias.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_int(i)]);
    }
  }

  /// k distinct indices from [0, n), partial Fisher-Yates order.
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    std::vector<int> out(k);
    for (int i = 0; i < k; ++i) {
      const auto j = i + static_cast<int>(uniform_int(static_cast<std::uint64_t>(n - i)));
      std::swap(pool[i], pool[j]);
      out[i] = pool[i];
    }
    return out;
  }

  std::vector<int> sample_with_replacement(int n, int k) {
    std::vector<int> out(k);
    for (int i = 0; i < k; ++i) out[i] = static_cast<int>(uniform_int(n));
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cpfilter
