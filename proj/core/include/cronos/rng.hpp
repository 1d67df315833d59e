#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "cronos/dense.hpp"

namespace cronos {

/// Seeded pseudo-random stream.
///
/// Generator: xoshiro256** (Blackman & Vigna), state seeded by four
/// successive outputs of splitmix64(seed) with increment
/// 0x9E3779B97F4A7C15 and finalizer multipliers 0xBF58476D1CE4E5B9,
/// 0x94D049BB133111EB. Uniform doubles take the top 53 bits:
/// (next() >> 11) * 2^-53. Standard normals use the Marsaglia polar
/// method on uniforms mapped to (-1, 1); the second polar variate is
/// cached and returned by the following call.
///
/// A re-implementation adopting the same generator reproduces the integer
/// and uniform streams exactly; normals match up to the host libm's log().
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1).
  double uniform() noexcept;
  double normal() noexcept;
  /// Uniform integer in [0, bound). bound must be >= 1.
  std::uint64_t below(std::uint64_t bound) noexcept;

private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// rows x cols matrix of i.i.d. N(0, 1) entries, filled row-major.
/// Throws std::invalid_argument when rows or cols is zero.
Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols);

}  // namespace cronos
