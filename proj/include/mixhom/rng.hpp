#ifndef MIXHOM_RNG_HPP
#define MIXHOM_RNG_HPP

#include <cstdint>
#include <random>

namespace mixhom {

// Deterministic random source with cheap independent substreams.
//
// Every simulation loop in this library draws replicate r from
// Rng(seed, r), so results are bit-identical no matter how replicates are
// scheduled across workers.  The (seed, stream) pair is mixed through
// splitmix64 before seeding the core engine, which breaks the correlations
// a raw mt19937_64(seed + r) seeding would produce.
//
// All variate transforms are implemented here (inverse CDF for the normal,
// Marsaglia-Tsang for the gamma) rather than via <random> distributions,
// whose output sequences are implementation-defined and would make
// "byte-identical report" guarantees depend on the standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  // Raw 64 uniform bits.
  std::uint64_t next_u64() { return engine_(); }

  // Uniform on the open interval (0,1); safe to pass to inverse CDFs.
  double uniform();

  // Standard normal via the AS241 inverse CDF.
  double normal();

  // Gamma(shape, scale=1), shape > 0, by Marsaglia-Tsang squeeze
  // (with the standard u^(1/shape) boost for shape < 1).
  double gamma(double shape);

 private:
  std::mt19937_64 engine_;
};

// Quantile function of the standard normal (AS241, ~1e-15 accuracy).
// Exposed because samplers and tests both need it.
double normal_quantile(double p);

// splitmix64 finalizer; exposed for seeding derived streams elsewhere.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace mixhom

#endif  // MIXHOM_RNG_HPP
