#pragma once

// Shared error types, stable hashing and the counter-based random source.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace breachradar {

inline constexpr std::string_view kVersion = "1.0.0";

// Input that cannot be turned into a valid graph or result (bad rows,
// empty candidate sets, malformed files).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A violated structural precondition on an in-memory object.
class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Iterative method left its region of convergence.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// FNV-1a, 64 bit. Stable across platforms and builds, unlike std::hash.
inline constexpr std::uint64_t fnv1a(std::string_view bytes,
                                     std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based generator: every draw is a pure function of
// (seed, stream, entity, counter), so results never depend on the order in
// which entities are visited.
class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t entity)
      : key_(splitmix64(splitmix64(seed ^ 0x6a09e667f3bcc909ULL) ^ stream) ^
             splitmix64(entity + 0x3c6ef372fe94f82bULL)) {}

  constexpr std::uint64_t next_u64() { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1], safe for log().
  double uniform_open0() { return 1.0 - uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t below(std::uint64_t n) {
    // Lemire's multiply-shift; the bias for n << 2^64 is negligible here.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  double normal() {
    const double u1 = uniform_open0();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Knuth's product method for small means, normal approximation above 60.
  std::uint64_t poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean > 60.0) {
      const double x = std::round(mean + std::sqrt(mean) * normal());
      return x < 0.0 ? 0 : static_cast<std::uint64_t>(x);
    }
    const double limit = std::exp(-mean);
    std::uint64_t k = 0;
    double prod = uniform_open0();
    while (prod > limit) {
      ++k;
      prod *= uniform_open0();
    }
    return k;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace breachradar
