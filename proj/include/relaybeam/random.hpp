// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace relaybeam {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream per (seed, stream id). Channel links, agent noise and
// network init each get their own stream so that one consumer never shifts
// another's draws.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x5851f42d4c957f2dULL)));
}

// Circularly-symmetric complex Gaussian with the given per-component std.
inline std::complex<double> complex_normal(Rng& rng, double component_std) {
  std::normal_distribution<double> n(0.0, component_std);
  const double re = n(rng);
  const double im = n(rng);
  return {re, im};
}

}  // namespace relaybeam
