#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace camkd {

/// splitmix64 finalizer; used for seeding and for deriving independent sub-streams.
std::uint64_t splitmix64(std::uint64_t& state);

/// Derive a child seed for a named stream so that e.g. student init and
/// epoch shuffling never share a generator.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// xoshiro256** generator. All sampling helpers are implemented here rather than
/// through <random> distributions, whose outputs differ between standard libraries;
/// every logged number must be reproducible from the seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);

  /// Standard normal via the Box-Muller transform (no cached second value).
  double normal();

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::uint64_t s_[4];
};

}  // namespace camkd
