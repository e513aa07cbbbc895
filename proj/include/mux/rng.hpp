#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace mux {

/// Deterministic stream generator built on SplitMix64 (Sebastiano Vigna,
/// 2015, public domain). The 64-bit integer stream is bit-identical on
/// every platform; floats are derived from the high bits so they are too.
/// Gaussian draws use Box-Muller and always consume exactly two integers.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1), 53 random bits.
  double next_double();

  /// Uniform in [0, 1), 24 random bits.
  float next_float();

  float normal(float mean = 0.0f, float stddev = 1.0f);

  /// Uniform integer in [0, n), rejection-sampled so it is unbiased.
  std::uint32_t next_below(std::uint32_t n);

  /// Namespaced sub-seed: FNV-1a of the tag Xered into the root seed and
  /// mixed once. All project randomness flows from one root seed through
  /// this derivation, so subsystems replay independently.
  static std::uint64_t derive(std::uint64_t root_seed, std::string_view tag);

 private:
  std::uint64_t state_;
};

/// Deterministic Fisher-Yates permutation of 0..n-1.
std::vector<std::uint32_t> random_permutation(std::uint32_t n, Rng& rng);

}  // namespace mux
