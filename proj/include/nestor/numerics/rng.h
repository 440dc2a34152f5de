#ifndef NESTOR_NUMERICS_RNG_H_
#define NESTOR_NUMERICS_RNG_H_

#include <cstdint>
#include <random>

#include "nestor/numerics/matrix.h"

namespace nestor::numerics {

// Seeded random source. The engine is std::mt19937_64, whose output stream
// is fixed by the standard; the distributions below are implemented here
// rather than taken from <random> because the standard library
// distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller (one draw per call, no caching).
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  Matrix uniform_matrix(Index rows, Index cols, double lo, double hi);
  Matrix normal_matrix(Index rows, Index cols, double stddev);

  // Derives an independent generator for a sub-task.
  Rng fork() { return Rng(engine_()); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace nestor::numerics

#endif  // NESTOR_NUMERICS_RNG_H_
