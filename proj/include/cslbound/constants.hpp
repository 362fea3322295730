#pragma once

#include <numbers>

namespace cslbound::constants {

// CODATA 2018 exact or recommended values, SI units.
inline constexpr double hbar = 1.054571817e-34;          // J s
inline constexpr double kB = 1.380649e-23;               // J / K
inline constexpr double flux_quantum = 2.067833848e-15;  // Wb
// The nucleon reference mass of the collapse model is taken as one atomic
// mass unit, the convention of the collapse-model literature.
inline constexpr double m0 = 1.66053906660e-27;  // kg

inline constexpr double pi = std::numbers::pi;

}  // namespace cslbound::constants
