#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace spikegrid {

// Error taxonomy. Everything thrown by the library derives from Error so the
// CLI can map failures to exit codes without enumerating call sites.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Shape, dtype or axis mismatch between operands.
struct DimensionError : Error {
  using Error::Error;
};
// A documented precondition was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};
// Non-finite values, divergence, checksum mismatch of numeric state.
struct NumericError : Error {
  using Error::Error;
};
// Filesystem and stream failures.
struct IoError : Error {
  using Error::Error;
};
// Malformed file contents (CSV, checkpoint, tensor files).
struct FormatError : Error {
  using Error::Error;
};
// Bad run configuration; the CLI maps this to exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic random source. All transforms are implemented by hand so the
// stream is identical across standard libraries; mt19937_64 itself is
// specified bit-exactly.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(splitmix64(seed)) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; two draws per call, no cached spare.
  double normal() {
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // Uniform integer in [0, n).
  int64_t below(int64_t n) {
    if (n <= 0) throw ContractError("Rng::below: n must be positive");
    uint64_t bound = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t x = gen_();
    while (x >= limit) x = gen_();
    return static_cast<int64_t>(x % bound);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Derive an independent generator for a named substream.
  Rng split(uint64_t stream) {
    return Rng(splitmix64(gen_() ^ splitmix64(stream + 0x51ab61c3)));
  }

  // Pure derivation: independent stream for (seed, tag, index) without
  // touching any generator state.
  static Rng derive(uint64_t seed, uint64_t tag, uint64_t a = 0, uint64_t b = 0);

 private:
  std::mt19937_64 gen_;
};

// Seed for the (seed, tag, a, b) substream; Rng::derive is exactly
// Rng(derive_seed(...)).
inline uint64_t derive_seed(uint64_t seed, uint64_t tag, uint64_t a = 0, uint64_t b = 0) {
  uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ splitmix64(tag + 0x1000));
  h = splitmix64(h ^ splitmix64(a + 0x2000));
  return splitmix64(h ^ splitmix64(b + 0x3000));
}

inline Rng Rng::derive(uint64_t seed, uint64_t tag, uint64_t a, uint64_t b) {
  return Rng(derive_seed(seed, tag, a, b));
}

// Upper bound for worker threads: the SPIKEGRID_THREADS environment variable
// caps whatever the hardware reports; results never depend on the value.
int max_threads();

}  // namespace spikegrid
