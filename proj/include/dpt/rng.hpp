#pragma once

#include <cstdint>

namespace dpt {

// Stateless 64-bit mix (splitmix64 finalizer).  Used for the counter-based
// generator below and anywhere a deterministic hash of small integers is
// needed (per-parameter init streams, per-epoch shuffle seeds).
uint64_t mix64(uint64_t x);

// Counter-based generator: draw i of stream (seed) is a pure function of
// (seed, i), so identical seeds give identical sequences on every platform
// and independent streams can be forked without sharing state.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed) {}

  // Independent child stream; forks of distinct ids never collide with the
  // parent's own draw sequence.
  Rng fork(uint64_t stream) const;

  uint64_t next_u64();

  // Uniform on [0,1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Uniform on {0, ..., n-1} by rejection (exact, unbiased).
  int64_t uniform_int(int64_t n);

  // Standard normal via Box-Muller (cosine branch only, so each value costs
  // exactly two uniform draws and the counter advance is data-independent).
  double normal();
  double normal(double mean, double std);

  // Normal(0, std) with samples outside mean +/- lim*std rejected.
  double trunc_normal(double std, double lim = 2.0);

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }

 private:
  uint64_t seed_;
  uint64_t counter_ = 0;
};

}  // namespace dpt
