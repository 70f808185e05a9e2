#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace randobs {

// SplitMix64 (Steele/Lea/Flood 2014, Vigna's fixed-increment variant):
// 64-bit Weyl sequence through an avalanching finalizer. Used both as the
// per-stream generator and, through split_seed, as the counter-based map
// that derives independent (rep, role) substreams from one master seed.
inline constexpr std::uint64_t kSplitMix64Gamma = 0x9E3779B97F4A7C15ULL;

inline constexpr std::uint64_t splitmix64_finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr SplitMix64(std::uint64_t seed) : state_(seed) {}

  constexpr std::uint64_t operator()() {
    return splitmix64_finalize(state_ += kSplitMix64Gamma);
  }

  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() {
    return std::numeric_limits<std::uint64_t>::max();
  }

 private:
  std::uint64_t state_;
};

// (seed, index) -> subseed. The index is a counter: adding new indices later
// never changes the subseed of an existing one.
inline constexpr std::uint64_t split_seed(std::uint64_t seed,
                                          std::uint64_t index) {
  return splitmix64_finalize(seed + (index + 1) * kSplitMix64Gamma);
}

// Generator name recorded in run manifests; bump the suffix if any sampling
// algorithm below changes, since that changes every derived stream.
inline constexpr const char* kRngName = "splitmix64-v1";

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  // Independent stream for repetition `rep` and stream role `role`.
  static RngStream derive(std::uint64_t master_seed, std::uint64_t rep,
                          std::uint64_t role) {
    return RngStream(split_seed(split_seed(master_seed, rep), role));
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0,1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Unbiased integer in [0, n) by rejection on the top of the 64-bit range.
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n == 0) {
      throw std::invalid_argument("uniform_below: n must be positive");
    }
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t r = gen_();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller; the second variate of each pair is
  // cached so draws stay paired and the stream layout is fully specified.
  double gauss() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(theta);
    have_spare_ = true;
    return radius * std::cos(theta);
  }

  // Poisson count by Knuth's product-of-uniforms method. Intensities are
  // consumed in chunks of at most 500 so exp(-chunk) stays a normal double;
  // the chunk counts add up to a Poisson(lambda) draw (superposition).
  long poisson(double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      throw std::invalid_argument("poisson: lambda must be finite and >= 0");
    }
    long total = 0;
    while (lambda > 0.0) {
      const double chunk = std::min(lambda, 500.0);
      total += poisson_knuth(chunk);
      lambda -= chunk;
    }
    return total;
  }

 private:
  long poisson_knuth(double lambda) {
    const double limit = std::exp(-lambda);
    long k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  SplitMix64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace randobs
