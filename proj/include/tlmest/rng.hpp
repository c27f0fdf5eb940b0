#pragma once

#include <cstdint>
#include <random>

namespace tlmest {

// Counter-based seed derivation: a master seed fans out into independent
// substreams keyed by integer ids, so replications and per-dataset draws are
// reproducible regardless of evaluation order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t id) {
  return splitmix64(splitmix64(seed) ^ splitmix64(id * 0xd6e8feb86659fd93ULL + 1));
}

inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t id) {
  return std::mt19937_64(mix_seed(seed, id));
}

inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t id1, std::uint64_t id2) {
  return std::mt19937_64(mix_seed(mix_seed(seed, id1), id2));
}

inline double laplace_draw(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  double u = unif(rng);
  double mag = -scale * std::log(1.0 - 2.0 * std::abs(u));
  return u < 0 ? -mag : mag;
}

}  // namespace tlmest
