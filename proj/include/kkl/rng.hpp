#pragma once

#include <cstdint>
#include <span>

namespace kkl {

// xoshiro256** seeded through splitmix64, following the published reference
// implementation so that runs are reproducible across standard libraries.
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed);

  std::uint64_t next();

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the spare value is cached.
  double normal();

  // Gaussian-then-normalize unit vector.
  void unit_vector(std::span<double> out);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace kkl
