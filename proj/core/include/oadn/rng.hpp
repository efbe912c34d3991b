#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace oadn {

struct RngSeed {
  std::uint64_t value = 0;
};

// Deterministic random stream, one per (seed, label) pair.
//
// The generator algorithm is pinned so that datasets regenerate bit-exactly
// on any platform and can be re-derived by an independent implementation:
//
//   label_hash = FNV-1a 64-bit over the label bytes
//                (offset 14695981039346656037, prime 1099511628211)
//   x          = seed XOR label_hash
//   state[i]   = splitmix64(x), four successive outputs  (i = 0..3)
//   next_u64   = xoshiro256++ (Blackman & Vigna, 2019)
//   uniform    = (next_u64 >> 11) * 2^-53                    in [0, 1)
//   gaussian   = Box-Muller on (1 - u1, u2), z1 cached
//   below(n)   = high 64 bits of next_u64 * n  (multiply-shift)
//   poisson    = Knuth product method (intended for lambda <= 50)
class Rng {
 public:
  Rng(RngSeed seed, std::string_view label);

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53-bit mantissa.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Integer in [0, n).  n must be > 0.
  std::uint64_t below(std::uint64_t n);
  // Integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Standard normal.
  double gaussian();
  double gaussian(double mean, double std);
  // Poisson-distributed count with the given mean.
  std::uint64_t poisson(double lambda);

  // Fisher-Yates using below(); permutes indices 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

  static std::uint64_t fnv1a64(std::string_view bytes);

 private:
  std::uint64_t state_[4];
  double cached_gauss_ = 0.0;
  bool has_cached_gauss_ = false;
};

}  // namespace oadn
