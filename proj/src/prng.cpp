#include "bnlab/prng.hpp"

#include <cmath>

namespace bnlab {

namespace {

constexpr uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

uint64_t mix_seed(uint64_t a, uint64_t b) {
  return mix64(a ^ mix64(b + kGamma));
}

uint64_t Prng::next_u64() {
  counter_ += 1;
  return mix64(seed_ + counter_ * kGamma);
}

double Prng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Prng::next_uniform(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

double Prng::next_normal() {
  // Box-Muller; u1 nudged away from 0 so log stays finite. Two uniform
  // draws per normal keeps the draw count position-independent.
  double u1 = next_double();
  double u2 = next_double();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

uint64_t Prng::next_below(uint64_t n) {
  if (n <= 1) return 0;
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % n;
}

}  // namespace bnlab
