#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace ibc {

/// Seed derivation for named, hierarchical sub-generators: every stage of a
/// run draws from a generator whose seed is a pure function of the global
/// seed and its position in the pipeline, so any stage can be re-run in
/// isolation and parallel branches stay independent.
std::uint64_t derive_seed(std::uint64_t base, std::span<const std::uint64_t> path);
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path);

/// Deterministic random source. Distribution mappings are implemented here
/// (not via std:: distributions) so that draw sequences are pinned by the
/// mt19937_64 stream alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed), seed_(seed) {}

  std::uint64_t next() { return gen_(); }

  /// Uniform on [0, 1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller; two uniforms per draw, no caching.
  double normal();
  double normal(double mean, double stddev);

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  /// Fisher-Yates shuffle (std::shuffle is implementation-defined).
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Generator for a named branch under this generator's construction seed.
  /// Independent of how many draws have been made.
  Rng sub(std::initializer_list<std::uint64_t> path) const {
    return Rng(derive_seed(seed_, path));
  }

 private:
  std::mt19937_64 gen_;
  std::uint64_t seed_;
};

}  // namespace ibc
