#pragma once

#include <cstdint>

namespace vsrhe {

/// xoshiro256** seeded through splitmix64.
///
/// All random sampling in the toolkit (weight initialization, patch
/// extraction, augmentation) goes through this generator so that a seed fully
/// determines the result on every platform. Distribution helpers are
/// implemented here rather than via <random> because the standard
/// distributions are implementation-defined.
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed);

  std::uint64_t next();

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_below(std::uint64_t bound);

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01();

  // Box-Muller; caches the second variate.
  double normal(double mean, double stddev);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace vsrhe
