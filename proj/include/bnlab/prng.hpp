#pragma once

#include <cstdint>

namespace bnlab {

// Named sub-streams. Runs vary initialization, data order, augmentation and
// mask selection independently, so each gets its own keyed stream.
enum class RngStream : uint64_t {
  weights = 1,
  gamma = 2,
  data_order = 3,
  augmentation = 4,
  mask_selection = 5,
};

// Stateless key derivation: mix_seed(a, b) depends only on its arguments.
uint64_t mix_seed(uint64_t a, uint64_t b);

// Counter-based generator (splitmix64 output function). Draws are a pure
// function of (seed, position), so identical seeds give identical sequences
// across runs. split() keys children off the construction seed alone; a
// child stream is unaffected by how many values the parent has drawn.
//
// Integer and uniform draws are bit-exact everywhere. next_normal() goes
// through libm (log/cos), which is only guaranteed identical on the same
// C library.
class Prng {
 public:
  explicit Prng(uint64_t seed) : seed_(seed), counter_(0) {}

  uint64_t next_u64();
  double next_double();                       // uniform in [0, 1), 53-bit
  double next_uniform(double lo, double hi);  // uniform in [lo, hi)
  double next_normal();                       // standard normal, Box-Muller
  uint64_t next_below(uint64_t n);            // uniform in [0, n), unbiased

  Prng split(uint64_t stream) const { return Prng(mix_seed(seed_, stream)); }
  Prng split(RngStream stream) const { return split(static_cast<uint64_t>(stream)); }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  uint64_t counter_;
};

}  // namespace bnlab
