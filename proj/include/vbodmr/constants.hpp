#pragma once

/// \file constants.hpp
/// \brief Physical constants and V_B / nitrogen parameters used throughout vbodmr.
///
/// Units follow the conventions of the rest of the library: frequencies in MHz,
/// fields in mT, nuclear gyromagnetic ratios in kHz/mT, atomic masses in u.

namespace vbodmr::constants {

// CODATA 2018
inline constexpr double planck_h = 6.62607015e-34;            // J s (exact)
inline constexpr double mu0_over_4pi = 1.00000000055e-7;      // T^2 m^3 / J

inline constexpr double gamma_e_mhz_per_mt = 28.0;
inline constexpr double gamma_n14_khz_per_mt = 3.077;
inline constexpr double gamma_n15_khz_per_mt = -4.316;

inline constexpr double zfs_ground_mhz = 3466.0;
inline constexpr double zfs_excited_mhz = 2130.0;

// Measured nearest-neighbour |A_zz| magnitudes, used as fit defaults.
inline constexpr double a14_typical_mhz = 43.0;
inline constexpr double a15_typical_mhz = 64.0;

// Atomic masses.
inline constexpr double mass_b10 = 10.0129;
inline constexpr double mass_b11 = 11.0093;
inline constexpr double mass_n14 = 14.0031;
inline constexpr double mass_n15 = 15.0001;
inline constexpr double natural_b10_fraction = 0.199;

// Empirical Raman line: shift = slope * sqrt(mu) + intercept, in cm^-1.
inline constexpr double raman_slope = -537.0;
inline constexpr double raman_intercept = 2691.0;

}  // namespace vbodmr::constants
