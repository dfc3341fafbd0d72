#include "ibc/rng.hpp"

#include <cmath>
#include <numbers>

#include "ibc/errors.hpp"

namespace ibc {

namespace {

// splitmix64 finalizer; chains one path component into the running seed.
std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::span<const std::uint64_t> path) {
  std::uint64_t s = mix(base);
  for (std::uint64_t component : path) s = mix(s ^ mix(component));
  return s;
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  return derive_seed(base, std::span<const std::uint64_t>(path.begin(), path.size()));
}

double Rng::uniform() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double Rng::normal() {
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::normal(double mean, double stddev) {
  return mean + stddev * normal();
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw Error("Rng::index: empty range");
  return static_cast<std::size_t>(next() % n);
}

}  // namespace ibc
