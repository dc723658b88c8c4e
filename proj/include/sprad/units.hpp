// units.hpp -- time base and physical constants.
#pragma once

#include <cmath>
#include <cstdint>

namespace sprad {

/// Event times are integer picoseconds so dead-time comparisons are exact.
using Picoseconds = std::int64_t;

inline constexpr double kPicosecondsPerSecond = 1e12;

/// Planck constant (J s) and speed of light (m/s), exact SI values.
inline constexpr double kPlanck = 6.62607015e-34;
inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPlanckTimesC = kPlanck * kSpeedOfLight;

inline Picoseconds to_ps(double seconds) {
  return static_cast<Picoseconds>(std::llround(seconds * kPicosecondsPerSecond));
}

inline constexpr double to_seconds(Picoseconds ps) {
  return static_cast<double>(ps) / kPicosecondsPerSecond;
}

/// Energy of one photon at `wavelength` (m), in J.
inline constexpr double photon_energy(double wavelength) {
  return kPlanckTimesC / wavelength;
}

}  // namespace sprad
