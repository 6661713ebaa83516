#pragma once

// Physical constants, the trap-unit system and SI conversions.
//
// Everything downstream of this header computes in trap units
// (hbar = m = omega0 = 1): the 1D level spacing is 1, the 3D
// ground-state energy is 3/2, dq0 = dp0 = 1/sqrt(2), and temperature
// is measured in hbar*omega0/k_B.  SI appears only at I/O boundaries.

#include <stdexcept>

namespace stochcool {

namespace constants {
// CODATA 2018; k_B is exact by SI definition.
inline constexpr double hbar = 1.054571817e-34;             // J s
inline constexpr double k_boltzmann = 1.380649e-23;         // J / K
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg
inline constexpr double zeta3 = 1.2020569031595943;         // Riemann zeta(3)
inline constexpr double sodium23_mass_u = 22.98976928;
}  // namespace constants

struct PhysicalConfig {
  double omega0;  // angular trap frequency, rad/s
  double mass;    // atomic mass, kg
  double hbar = constants::hbar;
  double k_B = constants::k_boltzmann;

  // Trap built from an oscillation frequency in Hz and a mass in u.
  static PhysicalConfig from_trap_frequency_hz(double nu_hz, double mass_u);

  // The internal unit system itself (hbar = m = omega0 = 1).
  static PhysicalConfig trap_units();

  void validate() const;  // throws std::invalid_argument

  double ground_state_length() const;    // dq0 = sqrt(hbar / (2 m omega0)), m
  double ground_state_momentum() const;  // dp0 = sqrt(hbar m omega0 / 2), kg m/s
  double ground_state_energy() const;    // E0 = (3/2) hbar omega0, J
  double level_spacing() const { return hbar * omega0; }  // J
};

// k_B T / (hbar omega0).  Negative temperature is a domain error.
double temperature_to_trap_units(double t_kelvin, const PhysicalConfig& cfg);
double temperature_from_trap_units(double t_trap, const PhysicalConfig& cfg);

// dq0 in metres; free-function form of PhysicalConfig::ground_state_length.
double ground_state_length(const PhysicalConfig& cfg);

}  // namespace stochcool
