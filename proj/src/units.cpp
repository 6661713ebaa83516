#include "stochcool/units.hpp"

#include <cmath>

namespace stochcool {

PhysicalConfig PhysicalConfig::from_trap_frequency_hz(double nu_hz, double mass_u) {
  PhysicalConfig cfg;
  cfg.omega0 = 2.0 * M_PI * nu_hz;
  cfg.mass = mass_u * constants::atomic_mass_unit;
  cfg.validate();
  return cfg;
}

PhysicalConfig PhysicalConfig::trap_units() {
  PhysicalConfig cfg;
  cfg.omega0 = 1.0;
  cfg.mass = 1.0;
  cfg.hbar = 1.0;
  cfg.k_B = 1.0;
  return cfg;
}

void PhysicalConfig::validate() const {
  if (!(omega0 > 0.0) || !(mass > 0.0) || !(hbar > 0.0) || !(k_B > 0.0))
    throw std::invalid_argument("PhysicalConfig: all fields must be strictly positive");
}

double PhysicalConfig::ground_state_length() const {
  return std::sqrt(hbar / (2.0 * mass * omega0));
}

double PhysicalConfig::ground_state_momentum() const {
  return std::sqrt(hbar * mass * omega0 / 2.0);
}

double PhysicalConfig::ground_state_energy() const { return 1.5 * hbar * omega0; }

double temperature_to_trap_units(double t_kelvin, const PhysicalConfig& cfg) {
  cfg.validate();
  if (t_kelvin < 0.0)
    throw std::domain_error("temperature_to_trap_units: negative temperature");
  return cfg.k_B * t_kelvin / (cfg.hbar * cfg.omega0);
}

double temperature_from_trap_units(double t_trap, const PhysicalConfig& cfg) {
  cfg.validate();
  if (t_trap < 0.0)
    throw std::domain_error("temperature_from_trap_units: negative temperature");
  return t_trap * cfg.hbar * cfg.omega0 / cfg.k_B;
}

double ground_state_length(const PhysicalConfig& cfg) {
  cfg.validate();
  return cfg.ground_state_length();
}

}  // namespace stochcool
