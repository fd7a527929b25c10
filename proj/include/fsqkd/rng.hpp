#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

namespace fsqkd {

// Stateless 64-bit finalizer (splitmix64). Used to derive independent
// substream seeds from a master seed so that intervals, scans and scrambler
// keyframes can be generated out of order with identical results.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Substream domains. Keeping them disjoint means a session, a scan and the
// scrambler never consume from each other's streams even under one master seed.
enum class StreamDomain : std::uint64_t {
  Session = 1,
  Scan = 2,
  Scrambler = 3,
  Equivalence = 4,
  Haar = 5,
  Test = 6,
};

inline std::uint64_t derive_seed(std::uint64_t master, StreamDomain domain,
                                 std::uint64_t index = 0) {
  std::uint64_t s =
      mix64(master + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(domain) + 1));
  return mix64(s + 0xd1b54a32d192ed03ULL * (index + 1));
}

namespace detail {

inline double bits_to_unit_double(std::uint64_t bits) {
  // 53-bit mantissa -> [0, 1)
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace detail

// Minimal counter-style generator for places where constructing a mt19937_64
// per stream would dominate (scrambler keyframes are created at 30 Hz of
// simulated time, i.e. millions per long run).
class SplitMixRng {
 public:
  explicit SplitMixRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    return mix64(z);
  }

  double uniform01() { return detail::bits_to_unit_double(next()); }

 private:
  std::uint64_t state_;
};

// Deterministic random stream. All distributions are implemented on top of
// raw 64-bit draws instead of std:: distributions, which are not guaranteed
// to produce identical sequences across standard library implementations.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // [0, 1)
  double uniform01() { return detail::bits_to_unit_double(engine_()); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // [0, 2*pi)
  double angle() { return 2.0 * std::numbers::pi * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  std::uint64_t uniform_index(std::uint64_t n) {
    // modulo bias is < 2^-53 for the n used here (class counts, bins)
    return static_cast<std::uint64_t>(uniform01() * static_cast<double>(n));
  }

  // One standard normal via Box-Muller. Uses exactly two draws; the sine
  // component is discarded to keep the stream layout independent of call
  // history.
  double gaussian() {
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

  double exponential(double mean) { return -mean * std::log(1.0 - uniform01()); }

  // Exact Poisson sampling: multiplicative chop-down for small means, and
  // Hoermann's PTRS transformed-rejection sampler above that.
  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean < 30.0) return poisson_chopdown(mean);
    return poisson_ptrs(mean);
  }

  // Binomial with n potentially ~1e10. Exact Bernoulli loop for small n;
  // Poisson limit for rare events; Gaussian approximation (rounded, clamped)
  // in the bulk regime where its error is far below Monte Carlo noise.
  std::uint64_t binomial(std::uint64_t n, double p) {
    if (n == 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    if (n <= 128) {
      std::uint64_t k = 0;
      for (std::uint64_t i = 0; i < n; ++i) k += bernoulli(p) ? 1 : 0;
      return k;
    }
    const double nd = static_cast<double>(n);
    if (nd * p < 30.0) {
      return std::min<std::uint64_t>(n, poisson(nd * p));
    }
    if (nd * (1.0 - p) < 30.0) {
      return n - std::min<std::uint64_t>(n, poisson(nd * (1.0 - p)));
    }
    const double mean = nd * p;
    const double sd = std::sqrt(nd * p * (1.0 - p));
    double x = std::round(mean + sd * gaussian());
    if (x < 0.0) x = 0.0;
    if (x > nd) x = nd;
    return static_cast<std::uint64_t>(x);
  }

 private:
  std::uint64_t poisson_chopdown(double mean) {
    const double limit = std::exp(-mean);
    std::uint64_t k = 0;
    double prod = uniform01();
    while (prod > limit) {
      ++k;
      prod *= uniform01();
    }
    return k;
  }

  std::uint64_t poisson_ptrs(double mean) {
    // W. Hoermann, "The transformed rejection method for generating Poisson
    // random variables" (PTRS), valid for mean >= 10.
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
      const double u = uniform01() - 0.5;
      const double v = uniform01();
      const double us = 0.5 - std::abs(u);
      const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
      if (us >= 0.07 && v <= v_r) return static_cast<std::uint64_t>(kf);
      if (kf < 0.0 || (us < 0.013 && v > us)) continue;
      if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
          kf * loglam - mean - std::lgamma(kf + 1.0)) {
        return static_cast<std::uint64_t>(kf);
      }
    }
  }

  std::mt19937_64 engine_;
};

}  // namespace fsqkd
