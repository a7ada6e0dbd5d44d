#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string_view>

namespace coforge {

// Portable random stream. The standard distributions are implementation
// defined, so every draw is derived from raw mt19937_64 output here; a given
// seed produces the same sequence on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1); safe to take log of.
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] (inclusive), unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  // Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Gumbel(0, 1).
  double gumbel();

  bool coin() { return (engine_() >> 63) != 0; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Seed for an independent sub-stream identified by a stable key, so that
// e.g. weight initialisation of one layer does not depend on how many other
// layers were initialised before it.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results must not
// depend on scheduling; callers give each index its own RNG stream.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace coforge
