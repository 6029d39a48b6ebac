#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace condet {

/// Deterministic random source. Every consumer derives a named substream from
/// the single run seed, so a subcommand invoked on its own draws the same
/// numbers it would draw inside the full pipeline. All primitives are built
/// on the standard-specified mt19937_64 output sequence; distribution code is
/// local to this class so results do not depend on the C++ library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : base_seed_(seed), engine_(seed) {}

  /// Stream for one module, derived from the base seed and a label.
  Rng substream(std::string_view name) const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a offset basis
    for (char c : name) {
      h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
      h *= 1099511628211ull;
    }
    return Rng(mix(base_seed_ ^ h));
  }

  std::uint64_t seed() const { return base_seed_; }

  std::uint64_t next() { return engine_(); }

  /// Unbiased integer in [0, n), n >= 1.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % n;
  }

  /// Uniform double in [0, 1).
  double real() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double range(double lo, double hi) { return lo + (hi - lo) * real(); }

  bool chance(double p) { return real() < p; }

  /// Poisson draw by CDF inversion; fine for the small means used here.
  int poisson(double mean) {
    if (mean <= 0.0) return 0;
    const double u = real();
    double p = std::exp(-mean);
    double cdf = p;
    int k = 0;
    while (u > cdf && k < 10000) {
      ++k;
      p *= mean / k;
      cdf += p;
    }
    return k;
  }

  /// Fisher-Yates shuffle of the first |v| entries.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {  // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::uint64_t base_seed_;
  std::mt19937_64 engine_;
};

}  // namespace condet
