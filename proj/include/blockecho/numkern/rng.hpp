#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "blockecho/errors.hpp"
#include "blockecho/numkern/matrix.hpp"

namespace blockecho::numkern {

// Independent streams derived from one user seed, so e.g. masks stay fixed while the
// training noise of different methods varies.
enum class Stream : std::uint64_t {
  kMask = 1,
  kInit = 2,
  kNoise = 3,
  kBatch = 4,
  kHint = 5,
  kData = 6,
  kLabels = 7,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t salt = 0) {
  return splitmix64(splitmix64(seed ^ (static_cast<std::uint64_t>(stream) << 56)) + salt);
}

// Seeded generator. The engine (mt19937_64) is bit-reproducible across standard
// libraries; the distribution transforms are written out here because the std::
// distributions are not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, Stream stream, std::uint64_t salt = 0)
      : engine_(derive_seed(seed, stream, salt)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw SpecError("Rng::below: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller; the second variate is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Knuth's method for small rates, normal approximation above 30.
  std::uint64_t poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    if (lambda > 30.0) {
      const double v = std::round(lambda + std::sqrt(lambda) * gaussian());
      return v < 0.0 ? 0 : static_cast<std::uint64_t>(v);
    }
    const double limit = std::exp(-lambda);
    std::uint64_t k = 0;
    double p = uniform();
    while (p > limit) {
      ++k;
      p *= uniform();
    }
    return k;
  }

  Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo = 0.0, double hi = 1.0) {
    Matrix m(rows, cols);
    for (auto& v : m.values()) v = uniform(lo, hi);
    return m;
  }

  Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double mean = 0.0,
                         double stddev = 1.0) {
    Matrix m(rows, cols);
    for (auto& v : m.values()) v = mean + stddev * gaussian();
    return m;
  }

  Matrix bernoulli_matrix(std::size_t rows, std::size_t cols, double p) {
    Matrix m(rows, cols);
    for (auto& v : m.values()) v = bernoulli(p) ? 1.0 : 0.0;
    return m;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace blockecho::numkern
