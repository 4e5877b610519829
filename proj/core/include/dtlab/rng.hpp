#ifndef DTLAB_RNG_HPP
#define DTLAB_RNG_HPP

#include <cstdint>

namespace dtlab {

// xoshiro256++ seeded through splitmix64. One generator algorithm for the
// whole project; identical seed gives an identical stream on every platform,
// which the std:: distributions do not guarantee.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  // Standard normal via Box-Muller (two uniforms per draw, no caching).
  double gaussian();
  // Standard Gumbel, for perturb-and-softmax sampling tables.
  double gumbel();
  // Bernoulli with probability p of returning true.
  bool bernoulli(double p);

  // Independent child stream; deterministic in (this generator's seed, salt).
  // Does not advance this generator's state.
  Rng derive(std::uint64_t salt) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

}  // namespace dtlab

#endif
