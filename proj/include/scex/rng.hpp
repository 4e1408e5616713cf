#pragma once

// Deterministic random number generation. All randomness in the library flows
// from a root seed through named stream derivation, so replicated work items
// (bootstrap repetitions, simulated fields) get independent streams whose
// output does not depend on scheduling or worker counts.

#include <cstdint>
#include <string_view>

namespace scex {

// xoshiro256++ with splitmix64 seeding.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform on [0,1) with 53-bit resolution.
  double uniform();
  // Uniform on (0,1); never returns an exact 0 (safe for log/quantile maps).
  double uniform_open();
  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);

  double exponential();          // rate 1
  double normal();               // standard Gaussian via inverse CDF
  double laplace();              // standard Laplace

 private:
  std::uint64_t s_[4];
};

// Derive an independent child seed from (root, stream name, index).
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                          std::uint64_t index = 0);

}  // namespace scex
