// random.hpp -- deterministic engine derivation.
#pragma once

#include <cstdint>
#include <random>

namespace sprad {

using Engine = std::mt19937_64;

/// Independent engine for sub-stream `stream` of a user seed. Components that
/// draw for different purposes (efficiency, dark counts, afterpulses) get
/// their own stream so one consumer cannot shift another's draws.
inline Engine make_engine(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream, 0x5eedu};
  return Engine(seq);
}

/// Uniform double in [0, 1) built from the top 53 bits of one draw.
inline double uniform01(Engine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace sprad
