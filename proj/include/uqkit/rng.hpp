#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>

namespace uq {

// Counter-based pseudo-random generator: draw i of a stream keyed by `key` is
// a fixed 64-bit mix of (key, i). Distinct purposes get their own streams via
// rekeying, so draws for one purpose never shift another purpose's sequence.
// The sampling routines (normal, gamma, ...) are spelled out here rather than
// taken from <random> because the standard leaves distribution sequences
// implementation-defined, and the test suite freezes Monte Carlo draws.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key = 0, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  static std::uint64_t mix(std::uint64_t key, std::uint64_t i) {
    std::uint64_t z = key + i * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  static std::uint64_t hash_name(std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : name) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return h;
  }

  // Derived stream for a named purpose ("init", "noise", "sampler", ...).
  CounterRng stream(std::string_view purpose) const {
    return CounterRng(mix(key_ ^ hash_name(purpose), 0x2545F4914F6CDD1Dull));
  }
  // Derived stream for an indexed purpose (chain id, ensemble member, ...).
  CounterRng stream(std::uint64_t index) const {
    return CounterRng(mix(key_ ^ (0xA0761D6478BD642Full + index), 0x8BB84B93962EACC9ull));
  }

  std::uint64_t next_u64() { return mix(key_, counter_++); }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<std::uint64_t>::max(); }
  result_type operator()() { return next_u64(); }

  // Uniform on [0,1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  // Uniform on (0,1].
  double uniform_pos() { return 1.0 - uniform(); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal (Box-Muller, one value per pair of uniforms).
  double normal() {
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }
  double normal(double mean, double stdev) { return mean + stdev * normal(); }

  // Gamma(shape, scale), Marsaglia-Tsang squeeze method.
  double gamma(double shape, double scale) {
    if (shape < 1.0) {
      double g = gamma(shape + 1.0, scale);
      return g * std::pow(uniform_pos(), 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
  }

  double chi_squared(double nu) { return gamma(0.5 * nu, 2.0); }

  // X with density proportional to x^{-(shape+1)} exp(-scale_beta/x):
  // the reciprocal of a Gamma(shape, 1/scale_beta) draw. Mean scale_beta/(shape-1).
  double inverse_gamma(double shape, double scale_beta) {
    return 1.0 / gamma(shape, 1.0 / scale_beta);
  }

  double student_t(double nu) { return normal() / std::sqrt(chi_squared(nu) / nu); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace uq
