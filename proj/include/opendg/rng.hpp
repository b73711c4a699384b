#pragma once

#include <cstdint>
#include <random>

namespace opendg {

// Deterministic random source. All distributions are generated from raw
// mt19937_64 output with fixed arithmetic, so streams are reproducible
// bit-for-bit for a given seed independent of the standard library's
// distribution implementations. No global RNG state anywhere; callers own
// their streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t u64() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return static_cast<double>((u64() >> 11) + 1) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  std::size_t index(std::size_t n);

  // Standard normal via Box-Muller (consumes two raw draws per call).
  double normal();

  // Gamma(shape, 1) via the Marsaglia-Tsang squeeze method; shapes below 1
  // use the boosting identity Gamma(a) = Gamma(a+1) * U^(1/a).
  double gamma(double shape);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Stateless seed derivation (splitmix64 mixing), used to give every
// (epoch, step, domain, phase) augmentation draw its own substream so the
// result is independent of domain processing order.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0, std::uint64_t d = 0);

}  // namespace opendg
