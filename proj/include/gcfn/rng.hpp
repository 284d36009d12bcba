#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gcfn {

// SplitMix64 (Steele, Lea & Flood 2014). Every stochastic step in the library
// draws from one of these, so a run is a pure function of its seeds.
//
// uniform() takes the top 53 bits of the next output: [0, 1).
// normal() is the Marsaglia polar method; the second variate of each accepted
// pair is cached and returned by the following call.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Unbiased integer in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound);

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stateless mix of a seed with a stream tag; used to give each component of a
// run (shuffling, initialization, sampling) its own independent stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, SplitMix64& rng);

}  // namespace gcfn
