#pragma once

#include <cstdint>
#include <random>

namespace flemvi {

using Rng = std::mt19937_64;

/// Independent generator for replica `stream` of a run seeded by `master`.
inline Rng make_stream(std::uint64_t master, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x9e3779b9u};
  return Rng(seq);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Uniform on the open interval (0, 1).
inline double uniform_open(Rng& rng) {
  double u;
  do {
    u = uniform01(rng);
  } while (u <= 0.0);
  return u;
}

}  // namespace flemvi
