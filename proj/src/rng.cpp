#include "dpt/rng.hpp"

#include <cmath>

#include "dpt/errors.hpp"

namespace dpt {

uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Rng Rng::fork(uint64_t stream) const {
  return Rng(mix64(seed_ ^ mix64(stream + 0x632BE59BD9B4E019ull)));
}

uint64_t Rng::next_u64() { return mix64(seed_ ^ mix64(counter_++)); }

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int64_t Rng::uniform_int(int64_t n) {
  if (n <= 0) throw ArgumentError("uniform_int needs a positive bound");
  uint64_t un = static_cast<uint64_t>(n);
  uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  for (;;) {
    uint64_t x = next_u64();
    if (x < limit) return static_cast<int64_t>(x % un);
  }
}

double Rng::normal() {
  // u1 in (0,1] so the log is finite.
  double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::normal(double mean, double std) { return mean + std * normal(); }

double Rng::trunc_normal(double std, double lim) {
  for (;;) {
    double z = normal();
    if (std::fabs(z) <= lim) return std * z;
  }
}

}  // namespace dpt
