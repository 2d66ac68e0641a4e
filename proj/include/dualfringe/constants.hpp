#pragma once

#include <numbers>

namespace dualfringe::constants {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

inline constexpr double hbar = 1.054571817e-34;        // J s
inline constexpr double rb87_mass = 1.44316e-25;       // kg
inline constexpr double rb87_d2_wavelength = 780.241e-9; // m

inline constexpr double ugal = 1e-8; // m/s^2

} // namespace dualfringe::constants
