#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedgrid {

// splitmix64 finalizer; used both for seed mixing and seed-hierarchy hashing.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives a child seed from a parent seed plus a path of integers
// (agent id, round, episode...). All randomness in the project funnels
// through this hierarchy so runs are reproducible from one global seed.
inline std::uint64_t seed_chain(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(root);
  for (std::uint64_t p : path) h = mix64(h ^ p);
  return h;
}

// mt19937_64 with explicitly-coded uniform/normal draws. The standard
// distributions are implementation-defined, so sampling is spelled out here
// to keep the bitwise-determinism contract independent of the C++ library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller (cosine branch only)
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fedgrid
